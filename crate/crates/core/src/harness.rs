//! Experiment orchestration behind the command-line tool: single runs,
//! sweeps, threshold computation, Picard studies and oracle comparisons.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentKind, RunConfig};
use crate::diagnostics::{
    attach_identity_residuals, attach_well_channels, fit_channel, well_floor_check, GrowthChannel,
    GrowthFit,
};
use crate::discretize::{assemble, AssembledOperators, DiscretizeError, Mesh1D};
use crate::integrate::{run, Termination, Trajectory};
use crate::io::{write_json, write_rows, write_trajectory_file, IoError};
use crate::picard::{distance_to_direct, picard_iterate, PicardError};
use crate::spectral::{build_basis, fem_spectral_gap, solve_spectral, SpectralError, SpectralMode};
use crate::thresholds::{AscentOptions, EmbeddingSpace, ThresholdConstants, ThresholdError};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const SWEEP_FILE: &str = "sweep_summary.csv";
pub const PICARD_FILE: &str = "picard.json";
pub const ORACLE_FILE: &str = "oracle_gap.csv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("cannot create output directory {path}: {source}")]
    OutDir {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Mesh(#[from] DiscretizeError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Picard(#[from] PicardError),
    #[error("{0}")]
    Invalid(String),
}

fn ensure_dir(out: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(out).map_err(|source| HarnessError::OutDir {
        path: out.display().to_string(),
        source,
    })
}

fn operators(cfg: &RunConfig) -> Result<AssembledOperators, HarnessError> {
    Ok(assemble(&Mesh1D::uniform(cfg.mesh.n_elem)?)?)
}

/// Threshold constants for the configured exponent and space.
pub fn thresholds_for(cfg: &RunConfig) -> Result<ThresholdConstants, HarnessError> {
    let mesh = Mesh1D::uniform(cfg.mesh.n_elem)?;
    Ok(ThresholdConstants::compute(
        cfg.model.p,
        &mesh,
        cfg.diagnostics.space,
        &cfg.ascent_options(),
    )?)
}

/// Everything computed by one run, before anything is written.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub thresholds: Option<ThresholdConstants>,
    pub termination: Option<Termination>,
    pub failure: Option<String>,
    pub e0: f64,
    pub grad_u0: f64,
    pub epsilon: Option<f64>,
    pub alpha2: Option<f64>,
    pub fit: Option<GrowthFit>,
    pub floor_violations: Option<usize>,
    pub identity_residual_max: f64,
    pub notes: Vec<String>,
}

impl RunOutcome {
    pub fn energy_below_d(&self) -> bool {
        self.thresholds.as_ref().is_some_and(|t| self.e0 < t.d)
    }

    pub fn gradient_above_alpha1(&self) -> bool {
        self.thresholds
            .as_ref()
            .is_some_and(|t| self.grad_u0 > t.alpha1)
    }
}

/// Runs the solver and all diagnostics. `thresholds` carries either the
/// constants or the reason they are unavailable. Only infrastructure
/// problems (a bad mesh) are errors; solver failures are recorded.
pub fn execute_run(
    cfg: &RunConfig,
    thresholds: Result<ThresholdConstants, String>,
) -> Result<RunOutcome, HarnessError> {
    let ops = operators(cfg)?;
    let init = cfg.initial.data();
    let mut notes = vec![];
    let (mut trajectory, termination, failure) = match run(&init, &ops, &cfg.model, &cfg.step) {
        Ok(t) => {
            let term = t.termination;
            (t, Some(term), None)
        }
        Err(f) => (f.partial, None, Some(f.error.to_string())),
    };
    attach_identity_residuals(&mut trajectory, &ops, &cfg.model);
    let first = trajectory.reports[0].clone();
    let identity_residual_max = trajectory
        .reports
        .iter()
        .map(|r| r.identity_residual)
        .fold(0.0, f64::max);

    let thresholds = match thresholds {
        Ok(t) => Some(t),
        Err(msg) => {
            notes.push(format!("thresholds unavailable: {msg}"));
            None
        }
    };
    let mut epsilon = None;
    let mut alpha2 = None;
    let mut fit = None;
    let mut floor_violations = None;
    if let Some(th) = &thresholds {
        match attach_well_channels(
            &mut trajectory,
            &ops,
            &cfg.model,
            th,
            &cfg.diagnostics.auxiliary(),
        ) {
            Ok(aux) => {
                epsilon = Some(aux.epsilon);
                let t_run = trajectory.final_time();
                let [a, b] = cfg.diagnostics.fit_window;
                match fit_channel(
                    &trajectory.reports,
                    GrowthChannel::L,
                    (a * t_run, b * t_run),
                ) {
                    Ok(f) => fit = Some(f),
                    Err(e) => notes.push(format!("growth fit skipped: {e}")),
                }
            }
            Err(e) => notes.push(format!("L channel not attached: {e}")),
        }
        if first.e < th.d && first.h1semi_u > th.alpha1 {
            match well_floor_check(&trajectory.reports, th, cfg.diagnostics.floor_tol) {
                Ok(check) => {
                    alpha2 = Some(check.alpha2);
                    floor_violations = Some(check.violations.len());
                }
                Err(e) => notes.push(format!("floor check skipped: {e}")),
            }
        }
    }
    Ok(RunOutcome {
        trajectory,
        thresholds,
        termination,
        failure,
        e0: first.e,
        grad_u0: first.h1semi_u,
        epsilon,
        alpha2,
        fit,
        floor_violations,
        identity_residual_max,
        notes,
    })
}

/// One line of a sweep summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub amplitude: f64,
    pub alpha: f64,
    pub r: f64,
    pub m: f64,
    pub p: f64,
    pub e0: f64,
    pub grad_u0: f64,
    pub alpha1: Option<f64>,
    pub d: Option<f64>,
    pub energy_below_d: bool,
    pub gradient_above_alpha1: bool,
    pub termination: String,
    pub t_final: Option<f64>,
    pub mu_hat: Option<f64>,
    pub r_squared: Option<f64>,
    pub floor_violations: Option<usize>,
    pub error: String,
}

impl SummaryRow {
    pub fn from_outcome(cell: usize, cfg: &RunConfig, outcome: &RunOutcome) -> Self {
        Self {
            cell,
            amplitude: cfg.initial.amplitude,
            alpha: cfg.model.alpha,
            r: cfg.model.r,
            m: cfg.model.m,
            p: cfg.model.p,
            e0: outcome.e0,
            grad_u0: outcome.grad_u0,
            alpha1: outcome.thresholds.as_ref().map(|t| t.alpha1),
            d: outcome.thresholds.as_ref().map(|t| t.d),
            energy_below_d: outcome.energy_below_d(),
            gradient_above_alpha1: outcome.gradient_above_alpha1(),
            termination: termination_label(outcome),
            t_final: Some(outcome.trajectory.final_time()),
            mu_hat: outcome.fit.map(|f| f.mu_hat),
            r_squared: outcome.fit.map(|f| f.r_squared),
            floor_violations: outcome.floor_violations,
            error: outcome.failure.clone().unwrap_or_default(),
        }
    }

    fn failed(cell: usize, cfg: &RunConfig, error: String) -> Self {
        Self {
            cell,
            amplitude: cfg.initial.amplitude,
            alpha: cfg.model.alpha,
            r: cfg.model.r,
            m: cfg.model.m,
            p: cfg.model.p,
            e0: f64::NAN,
            grad_u0: f64::NAN,
            alpha1: None,
            d: None,
            energy_below_d: false,
            gradient_above_alpha1: false,
            termination: "error".into(),
            t_final: None,
            mu_hat: None,
            r_squared: None,
            floor_violations: None,
            error,
        }
    }
}

fn termination_label(outcome: &RunOutcome) -> String {
    match &outcome.termination {
        Some(t) => t.label().into(),
        None => "failed".into(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub config: RunConfig,
    pub thresholds: Option<ThresholdConstants>,
    pub termination: Option<Termination>,
    pub failure: Option<String>,
    pub e0: f64,
    pub grad_u0: f64,
    pub energy_below_d: bool,
    pub gradient_above_alpha1: bool,
    pub epsilon: Option<f64>,
    pub alpha2: Option<f64>,
    pub mu_hat: Option<f64>,
    pub r_squared: Option<f64>,
    pub fit_window: Option<[f64; 2]>,
    pub identity_residual_max: f64,
    pub floor_violations: Option<usize>,
    pub samples: usize,
    pub notes: Vec<String>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig, outcome: &RunOutcome, wall_clock_s: f64) -> Self {
        let t_run = outcome.trajectory.final_time();
        let [a, b] = cfg.diagnostics.fit_window;
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            config: cfg.clone(),
            thresholds: outcome.thresholds.clone(),
            termination: outcome.termination,
            failure: outcome.failure.clone(),
            e0: outcome.e0,
            grad_u0: outcome.grad_u0,
            energy_below_d: outcome.energy_below_d(),
            gradient_above_alpha1: outcome.gradient_above_alpha1(),
            epsilon: outcome.epsilon,
            alpha2: outcome.alpha2,
            mu_hat: outcome.fit.map(|f| f.mu_hat),
            r_squared: outcome.fit.map(|f| f.r_squared),
            fit_window: outcome.fit.map(|_| [a * t_run, b * t_run]),
            identity_residual_max: outcome.identity_residual_max,
            floor_violations: outcome.floor_violations,
            samples: outcome.trajectory.reports.len(),
            notes: outcome.notes.clone(),
            wall_clock_s,
        }
    }
}

/// Single run: writes the trajectory CSV and the manifest. The manifest is
/// written whenever the output directory is usable, including when the
/// solver fails part-way.
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<RunManifest, HarnessError> {
    ensure_dir(out)?;
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.experiment.kind = ExperimentKind::Run;
    let thresholds = thresholds_for(&cfg).map_err(|e| e.to_string());
    let outcome = execute_run(&cfg, thresholds)?;
    write_trajectory_file(&out.join(TRAJECTORY_FILE), &outcome.trajectory.reports)?;
    let manifest = RunManifest::new(&cfg, &outcome, start.elapsed().as_secs_f64());
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[derive(Clone, Debug)]
pub struct ThresholdRequest {
    pub p: f64,
    pub n_elem: usize,
    pub space: EmbeddingSpace,
    pub seed: u64,
    /// Skip the maximization and use this constant.
    pub inject_b: Option<f64>,
}

pub fn cmd_thresholds(
    req: &ThresholdRequest,
    out: &Path,
) -> Result<ThresholdConstants, HarnessError> {
    let constants = match req.inject_b {
        Some(b) => ThresholdConstants::injected(b, req.p)?,
        None => {
            let mesh = Mesh1D::uniform(req.n_elem)?;
            let opts = AscentOptions {
                seed: req.seed,
                ..AscentOptions::default()
            };
            ThresholdConstants::compute(req.p, &mesh, req.space, &opts)?
        }
    };
    ensure_dir(out)?;
    write_json(&out.join(THRESHOLDS_FILE), &constants)?;
    Ok(constants)
}

/// Expands the sweep grid in a fixed order: amplitude varies fastest, then
/// α, r, m, p.
pub fn sweep_cells(cfg: &RunConfig) -> Result<Vec<RunConfig>, HarnessError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("config has no [sweep] section".into()))?;
    if sweep.amplitudes.is_empty() {
        return Err(HarnessError::Invalid("sweep grid is empty".into()));
    }
    let or_base = |list: &[f64], base: f64| {
        if list.is_empty() {
            vec![base]
        } else {
            list.to_vec()
        }
    };
    let mut cells = vec![];
    for &p in &or_base(&sweep.p, cfg.model.p) {
        for &m in &or_base(&sweep.m, cfg.model.m) {
            for &r in &or_base(&sweep.r, cfg.model.r) {
                for &alpha in &or_base(&sweep.alpha, cfg.model.alpha) {
                    for &amplitude in &sweep.amplitudes {
                        let mut c = cfg.clone();
                        c.sweep = None;
                        c.model.p = p;
                        c.model.m = m;
                        c.model.r = r;
                        c.model.alpha = alpha;
                        c.initial.amplitude = amplitude;
                        cells.push(c);
                    }
                }
            }
        }
    }
    Ok(cells)
}

/// Runs every sweep cell on a pool of `jobs` workers. Rows come back in
/// cell order whatever the scheduling; a failing cell fills its own row.
pub fn run_sweep(cfg: &RunConfig, jobs: usize) -> Result<Vec<SummaryRow>, HarnessError> {
    let cells = sweep_cells(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Invalid(format!("cannot start worker pool: {e}")))?;

    // Threshold constants depend only on p, so they are computed once per
    // exponent, in order, before the cells fan out.
    let mut constants: BTreeMap<u64, Result<ThresholdConstants, String>> = BTreeMap::new();
    for c in &cells {
        constants
            .entry(c.model.p.to_bits())
            .or_insert_with(|| pool.install(|| thresholds_for(c).map_err(|e| e.to_string())));
    }

    let rows = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let th = constants[&c.model.p.to_bits()].clone();
                match execute_run(c, th) {
                    Ok(outcome) => SummaryRow::from_outcome(i, c, &outcome),
                    Err(e) => SummaryRow::failed(i, c, e.to_string()),
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

pub fn cmd_sweep(
    cfg: &RunConfig,
    jobs: usize,
    out: &Path,
) -> Result<Vec<SummaryRow>, HarnessError> {
    let rows = run_sweep(cfg, jobs)?;
    ensure_dir(out)?;
    write_rows(&out.join(SWEEP_FILE), &rows)?;
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub t_horizon: f64,
    pub iterations: usize,
    pub converged: bool,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub median_ratio: Option<f64>,
    pub r_ball: f64,
    pub distance_to_direct: Option<f64>,
    pub error: Option<String>,
}

/// Picard iteration for each horizon; horizons run in parallel.
pub fn run_picard(cfg: &RunConfig) -> Result<Vec<PicardReport>, HarnessError> {
    let pc = cfg.picard.clone().unwrap_or_default();
    let ops = operators(cfg)?;
    let init = cfg.initial.data();
    let reports = pc
        .horizons
        .par_iter()
        .map(|&t_end| {
            let mut ctl = cfg.step.clone();
            ctl.t_end = t_end;
            ctl.output_every = 1;
            let mut report = PicardReport {
                t_horizon: t_end,
                iterations: 0,
                converged: false,
                distances: vec![],
                ratios: vec![],
                median_ratio: None,
                r_ball: 0.0,
                distance_to_direct: None,
                error: None,
            };
            match picard_iterate(&init, &ops, &cfg.model, &ctl, pc.k_max, pc.tol) {
                Ok(run) => {
                    report.iterations = run.distances.len();
                    report.converged = run.converged;
                    report.ratios = run.ratios();
                    report.median_ratio = run.median_ratio();
                    report.r_ball = run.r_ball;
                    match distance_to_direct(&run, &init, &ops, &cfg.model, &ctl) {
                        Ok(d) => report.distance_to_direct = Some(d),
                        Err(e) => report.error = Some(e.to_string()),
                    }
                    report.distances = run.distances;
                }
                Err(e) => report.error = Some(e.to_string()),
            }
            report
        })
        .collect();
    Ok(reports)
}

pub fn cmd_picard(cfg: &RunConfig, out: &Path) -> Result<Vec<PicardReport>, HarnessError> {
    let reports = run_picard(cfg)?;
    ensure_dir(out)?;
    write_json(&out.join(PICARD_FILE), &reports)?;
    Ok(reports)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapRow {
    pub n_modes: usize,
    pub gap: f64,
}

/// Sup-in-time L² gap between the FEM run and the spectral solution for
/// each basis size, on the FEM sample times.
pub fn oracle_gaps(cfg: &RunConfig, n_modes: &[usize]) -> Result<Vec<GapRow>, HarnessError> {
    let oc = cfg.oracle.clone().unwrap_or_default();
    let ops = operators(cfg)?;
    let init = cfg.initial.data();
    let fem = run(&init, &ops, &cfg.model, &cfg.step)
        .map_err(|f| HarnessError::Invalid(f.to_string()))?;
    if !matches!(fem.termination, Termination::TEnd) {
        return Err(HarnessError::Invalid(
            "finite-element run stopped at the blow-up guard".into(),
        ));
    }
    let times = fem.times();
    n_modes
        .par_iter()
        .map(|&n| {
            let basis = build_basis(n, oc.generator)?;
            let spec = solve_spectral(
                &basis,
                &cfg.model,
                &init,
                SpectralMode::Direct,
                &times,
                oc.tol,
            )?;
            Ok(GapRow {
                n_modes: n,
                gap: fem_spectral_gap(&fem, &ops, &spec, &basis)?,
            })
        })
        .collect()
}

pub fn cmd_oracle_compare(
    cfg: &RunConfig,
    n_modes: Option<&[usize]>,
    out: &Path,
) -> Result<Vec<GapRow>, HarnessError> {
    let default_modes = cfg.oracle.clone().unwrap_or_default().n_modes;
    let rows = oracle_gaps(cfg, n_modes.unwrap_or(&default_modes))?;
    ensure_dir(out)?;
    write_rows(&out.join(ORACLE_FILE), &rows)?;
    Ok(rows)
}
