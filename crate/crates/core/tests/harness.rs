use dynwave::config::{OracleConfig, RunConfig, SweepConfig};
use dynwave::harness::{
    cmd_oracle_compare, cmd_run, cmd_sweep, cmd_thresholds, execute_run, run_sweep, thresholds_for,
    SummaryRow, ThresholdRequest, MANIFEST_FILE, ORACLE_FILE, SWEEP_FILE, THRESHOLDS_FILE,
    TRAJECTORY_FILE,
};
use dynwave::io::read_trajectory;
use dynwave::thresholds::EmbeddingSpace;

const BASE: &str = r#"
[model]
alpha = 0.05
r = 0.5
p = 4.0
m = 2.0

[mesh]
n_elem = 32

[initial]
u0 = "linear_ramp"
amplitude = 1.0

[step]
dt = 0.01
t_end = 0.0

[diagnostics]
space = "h1_gamma0"
"#;

fn base() -> RunConfig {
    RunConfig::from_toml(BASE).unwrap()
}

fn manifest(dir: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn zero_horizon_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    cmd_run(&base(), dir.path()).unwrap();
    let rows =
        read_trajectory(std::fs::File::open(dir.path().join(TRAJECTORY_FILE)).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].t, 0.0);
    let m = manifest(dir.path());
    assert_eq!(m["termination"]["cause"], "t_end");
    assert_eq!(m["samples"], 1);
}

#[test]
fn newton_failure_still_writes_manifest() {
    let mut cfg = base();
    cfg.step.t_end = 0.5;
    cfg.step.newton_max_iter = 1;
    cfg.step.newton_tol = 1e-300;
    let dir = tempfile::tempdir().unwrap();
    let manifest_out = cmd_run(&cfg, dir.path()).unwrap();
    assert!(manifest_out
        .failure
        .as_deref()
        .is_some_and(|f| f.contains("Newton")));
    let m = manifest(dir.path());
    assert!(m["failure"].as_str().unwrap().contains("Newton"));
    assert!(m["termination"].is_null());
    assert!(dir.path().join(TRAJECTORY_FILE).exists());
}

#[test]
fn injected_constant_gives_closed_form_wells() {
    let dir = tempfile::tempdir().unwrap();
    let req = ThresholdRequest {
        p: 4.0,
        n_elem: 16,
        space: EmbeddingSpace::H01,
        seed: 0,
        inject_b: Some(1.0),
    };
    cmd_thresholds(&req, dir.path()).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(THRESHOLDS_FILE)).unwrap())
            .unwrap();
    assert_eq!(v["B"], 1.0);
    assert_eq!(v["alpha1"], 1.0);
    assert_eq!(v["d"], 0.25);
    assert_eq!(v["provenance"]["method"], "injected");
}

#[test]
fn single_cell_sweep_matches_run_row() {
    let mut cfg = base();
    cfg.step.t_end = 0.2;
    cfg.initial.amplitude = 2.8;
    let th = thresholds_for(&cfg).map_err(|e| e.to_string());
    let outcome = execute_run(&cfg, th).unwrap();
    let direct = SummaryRow::from_outcome(0, &cfg, &outcome);
    cfg.sweep = Some(SweepConfig {
        amplitudes: vec![2.8],
        alpha: vec![],
        r: vec![],
        m: vec![],
        p: vec![],
    });
    let rows = run_sweep(&cfg, 2).unwrap();
    assert_eq!(rows, vec![direct]);
}

#[test]
fn energy_flag_is_monotone_past_the_energy_peak() {
    // For u0 = A x at rest, E0 = A²/2 − A⁴/20, largest at A = √5.
    let mut cfg = base();
    let amplitudes: Vec<f64> = (0..9).map(|k| 5f64.sqrt() + 0.2 * k as f64).collect();
    cfg.sweep = Some(SweepConfig {
        amplitudes: amplitudes.clone(),
        alpha: vec![],
        r: vec![],
        m: vec![],
        p: vec![],
    });
    let dir = tempfile::tempdir().unwrap();
    let rows = cmd_sweep(&cfg, 4, dir.path()).unwrap();
    assert!(dir.path().join(SWEEP_FILE).exists());
    for (row, a) in rows.iter().zip(&amplitudes) {
        let exact = 0.5 * a * a - a.powi(4) / 20.0;
        assert!(
            (row.e0 - exact).abs() <= 1e-12 * exact.abs().max(1.0),
            "A = {a}: {} vs {exact}",
            row.e0
        );
    }
    let flags: Vec<bool> = rows.iter().map(|r| r.energy_below_d).collect();
    assert!(flags.windows(2).all(|w| w[1] || !w[0]), "{flags:?}");
    assert!(flags.last().copied().unwrap());
}

#[test]
fn sweep_rows_follow_cell_order() {
    let mut cfg = base();
    cfg.sweep = Some(SweepConfig {
        amplitudes: vec![0.5, 1.0],
        alpha: vec![0.0, 0.1],
        r: vec![],
        m: vec![2.0, 3.0],
        p: vec![],
    });
    let rows = run_sweep(&cfg, 3).unwrap();
    assert_eq!(rows.len(), 8);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.cell, i);
        assert_eq!(row.amplitude, [0.5, 1.0][i % 2]);
        assert_eq!(row.alpha, [0.0, 0.1][(i / 2) % 2]);
        assert_eq!(row.m, [2.0, 3.0][i / 4]);
    }
}

#[test]
fn quadratic_exponent_cell_records_missing_thresholds() {
    let mut cfg = base();
    cfg.sweep = Some(SweepConfig {
        amplitudes: vec![1.0],
        alpha: vec![],
        r: vec![],
        m: vec![],
        p: vec![2.0, 4.0],
    });
    let rows = run_sweep(&cfg, 2).unwrap();
    assert!(rows[0].alpha1.is_none() && !rows[0].energy_below_d);
    assert!(rows[1].alpha1.is_some());
}

#[test]
fn zero_data_oracle_gap_is_zero() {
    let mut cfg = base();
    cfg.initial.amplitude = 0.0;
    cfg.step.t_end = 0.3;
    cfg.oracle = Some(OracleConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let rows = cmd_oracle_compare(&cfg, Some(&[2, 3]), dir.path()).unwrap();
    assert!(rows.iter().all(|r| r.gap == 0.0));
    let text = std::fs::read_to_string(dir.path().join(ORACLE_FILE)).unwrap();
    assert!(text.starts_with("n_modes,gap"));
}
