//! Trajectory CSV and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::EnergyReport;

pub const TRAJECTORY_HEADER: [&str; 10] = [
    "t",
    "l2_u",
    "h1semi_u",
    "lp_u_p",
    "l2_ut",
    "l2g1_ut",
    "E",
    "H",
    "L",
    "identity_residual",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("header column {index}: expected `{expected}`, found `{found}`")]
    HeaderMismatch {
        index: usize,
        expected: &'static str,
        found: String,
    },
    #[error("header has {0} columns, expected 10")]
    HeaderLength(usize),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    BadValue {
        row: usize,
        column: &'static str,
        value: String,
    },
    #[error("row {row} has {got} fields, expected 10")]
    RowLength { row: usize, got: usize },
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })
}

/// Writes the trajectory CSV. Numbers use the shortest representation that
/// parses back to the same value, switching to exponent form for very large
/// or small magnitudes.
pub fn write_trajectory<W: Write>(writer: W, reports: &[EnergyReport]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in reports {
        w.write_record(
            [
                r.t,
                r.l2_u,
                r.h1semi_u,
                r.lp_u_p,
                r.l2_ut,
                r.l2g1_ut,
                r.e,
                r.h,
                r.l,
                r.identity_residual,
            ]
            .map(|x| format!("{x:?}")),
        )?;
    }
    w.flush().map_err(|source| IoError::File {
        path: "<trajectory>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_trajectory_file(path: &Path, reports: &[EnergyReport]) -> Result<(), IoError> {
    write_trajectory(create(path)?, reports)
}

/// Parses a trajectory CSV, requiring the exact header.
pub fn read_trajectory<R: Read>(reader: R) -> Result<Vec<EnergyReport>, IoError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(h) => h?,
        None => return Err(IoError::HeaderLength(0)),
    };
    if header.len() != TRAJECTORY_HEADER.len() {
        return Err(IoError::HeaderLength(header.len()));
    }
    for (index, (found, expected)) in header.iter().zip(TRAJECTORY_HEADER).enumerate() {
        if found != expected {
            return Err(IoError::HeaderMismatch {
                index,
                expected,
                found: found.to_string(),
            });
        }
    }
    let mut out = vec![];
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let row = i + 1;
        if rec.len() != TRAJECTORY_HEADER.len() {
            return Err(IoError::RowLength {
                row,
                got: rec.len(),
            });
        }
        let mut v = [0.0; 10];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field.trim().parse().map_err(|_| IoError::BadValue {
                row,
                column: TRAJECTORY_HEADER[k],
                value: field.to_string(),
            })?;
        }
        out.push(EnergyReport {
            t: v[0],
            l2_u: v[1],
            h1semi_u: v[2],
            lp_u_p: v[3],
            l2_ut: v[4],
            l2g1_ut: v[5],
            e: v[6],
            h: v[7],
            l: v[8],
            identity_residual: v[9],
        });
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|source| IoError::File {
            path: path.display().to_string(),
            source,
        })
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}
