//! Energy functionals evaluated along trajectories.
//!
//! * `E = ½‖∇u‖₂² − (1/p)‖u‖_p^p + ½‖u_t‖₂² + ½|u_t(1)|²`
//! * `H = d − E`
//! * `L = H + ε∫u_t u + ε u_t(1)u(1) + (εα/2)‖∇u‖₂²`
//!
//! plus the energy-balance residual, the gradient/`L^p` floor check of the
//! growth regime, and a log-linear growth-rate fit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{dot, AssembledOperators};
use crate::integrate::{State, Trajectory};
use crate::model::ModelParams;
use crate::thresholds::{ThresholdConstants, ThresholdError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("well gap H(0) = {0} is not positive; the growth regime does not apply")]
    NonpositiveWellGap(f64),
    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),
    #[error("channel has a nonpositive or non-finite sample at t = {t}: {value}")]
    NonpositiveSamples { t: f64, value: f64 },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

/// Norm channels and functionals at one sample time. `H`, `L` and the
/// identity residual are NaN until attached.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub l2_u: f64,
    pub h1semi_u: f64,
    pub lp_u_p: f64,
    pub l2_ut: f64,
    pub l2g1_ut: f64,
    #[serde(rename = "E")]
    pub e: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub identity_residual: f64,
}

impl EnergyReport {
    /// Energy rebuilt from the stored channels.
    pub fn recompute_energy(&self, params: &ModelParams) -> f64 {
        let potential = if params.source {
            self.lp_u_p / params.p
        } else {
            0.0
        };
        0.5 * self.h1semi_u * self.h1semi_u - potential
            + 0.5 * self.l2_ut * self.l2_ut
            + 0.5 * self.l2g1_ut * self.l2g1_ut
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_u_p.powf(1.0 / p)
    }
}

pub fn energy(state: &State, ops: &AssembledOperators, params: &ModelParams) -> EnergyReport {
    let l2_u = ops.l2_norm_sq(&state.u).max(0.0).sqrt();
    let h1semi_u = ops.h1_seminorm_sq(&state.u).max(0.0).sqrt();
    let lp_u_p = ops.lp_norm_pow(&state.u, params.p);
    let l2_ut = ops.l2_norm_sq(&state.v).max(0.0).sqrt();
    let l2g1_ut = ops.trace(&state.v).abs();
    let mut report = EnergyReport {
        t: state.t,
        l2_u,
        h1semi_u,
        lp_u_p,
        l2_ut,
        l2g1_ut,
        e: 0.0,
        h: f64::NAN,
        l: f64::NAN,
        identity_residual: f64::NAN,
    };
    report.e = report.recompute_energy(params);
    report
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuxiliaryConfig {
    /// Fixed ε, or the cap on ε when `auto_epsilon` is set.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub auto_epsilon: bool,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

impl Default for AuxiliaryConfig {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            auto_epsilon: true,
        }
    }
}

/// `L` with its ε resolved against the initial state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuxiliaryFunction {
    pub epsilon: f64,
    pub h0: f64,
    pub d: f64,
}

impl AuxiliaryFunction {
    /// Resolves ε. The automatic rule
    /// `ε = min(cap, H(0) / (2(|∫u₁u₀| + |u₁(1)u₀(1)| + (α/2)‖∇u₀‖₂² + 1)))`
    /// guarantees `L(0) ≥ H(0)/2`.
    pub fn new(
        cfg: &AuxiliaryConfig,
        initial: &State,
        ops: &AssembledOperators,
        params: &ModelParams,
        thresholds: &ThresholdConstants,
    ) -> Result<Self, DiagnosticsError> {
        let e0 = energy(initial, ops, params).e;
        let h0 = thresholds.d - e0;
        if !(h0 > 0.0) {
            return Err(DiagnosticsError::NonpositiveWellGap(h0));
        }
        let epsilon = if cfg.auto_epsilon {
            let coupling = ops.mass.form(&initial.v, &initial.u).abs()
                + (ops.trace(&initial.v) * ops.trace(&initial.u)).abs()
                + 0.5 * params.alpha * ops.h1_seminorm_sq(&initial.u);
            cfg.epsilon.min(h0 / (2.0 * (coupling + 1.0)))
        } else {
            cfg.epsilon
        };
        Ok(Self {
            epsilon,
            h0,
            d: thresholds.d,
        })
    }

    pub fn evaluate(
        &self,
        state: &State,
        report: &EnergyReport,
        ops: &AssembledOperators,
        params: &ModelParams,
    ) -> f64 {
        let h = self.d - report.e;
        let coupling = ops.mass.form(&state.v, &state.u)
            + ops.trace(&state.v) * ops.trace(&state.u)
            + 0.5 * params.alpha * report.h1semi_u * report.h1semi_u;
        h + self.epsilon * coupling
    }
}

/// Fills `H` on every report and, when `H(0) > 0`, `L`.
pub fn attach_well_channels(
    traj: &mut Trajectory,
    ops: &AssembledOperators,
    params: &ModelParams,
    thresholds: &ThresholdConstants,
    cfg: &AuxiliaryConfig,
) -> Result<AuxiliaryFunction, DiagnosticsError> {
    for report in &mut traj.reports {
        report.h = thresholds.d - report.e;
    }
    let aux = AuxiliaryFunction::new(cfg, &traj.states[0], ops, params, thresholds)?;
    for (state, report) in traj.states.iter().zip(traj.reports.iter_mut()) {
        report.l = aux.evaluate(state, report, ops, params);
    }
    Ok(aux)
}

/// Which displacement drives the source term in the energy balance.
#[derive(Clone, Copy, Debug)]
pub enum IdentitySource<'a> {
    /// The trajectory's own displacement.
    Live,
    /// A separate displacement history on the same sample times.
    Frozen(&'a [State]),
}

struct BalanceTerms {
    quadratic: f64,
    dissipation_rate: f64,
    source_power: f64,
}

fn balance_terms(
    state: &State,
    source_u: &[f64],
    ops: &AssembledOperators,
    params: &ModelParams,
) -> BalanceTerms {
    let vt = ops.trace(&state.v);
    let quadratic = 0.5 * (ops.h1_seminorm_sq(&state.u) + ops.l2_norm_sq(&state.v) + vt * vt);
    let dissipation_rate =
        params.alpha * ops.h1_seminorm_sq(&state.v) + params.r * vt.abs().powf(params.m);
    let source_power = if params.source {
        dot(&ops.source_load(source_u, params.p), &state.v)
    } else {
        0.0
    };
    BalanceTerms {
        quadratic,
        dissipation_rate,
        source_power,
    }
}

/// Cumulative energy-balance residual `|R(t₀, t_k)| / max(1, |E(t₀)|)` at
/// every sample, time integrals by the trapezoid rule.
pub fn cumulative_identity_residuals(
    segment: &[State],
    ops: &AssembledOperators,
    params: &ModelParams,
    source: IdentitySource<'_>,
) -> Vec<f64> {
    if segment.is_empty() {
        return vec![];
    }
    let source_u = |k: usize| -> &[f64] {
        match source {
            IdentitySource::Live => &segment[k].u,
            IdentitySource::Frozen(src) => &src[k].u,
        }
    };
    let scale = energy(&segment[0], ops, params).e.abs().max(1.0);
    let first = balance_terms(&segment[0], source_u(0), ops, params);
    let mut out = vec![0.0];
    let mut integral = 0.0;
    let mut prev = first.dissipation_rate - first.source_power;
    let mut prev_t = segment[0].t;
    for (k, state) in segment.iter().enumerate().skip(1) {
        let terms = balance_terms(state, source_u(k), ops, params);
        let rate = terms.dissipation_rate - terms.source_power;
        integral += 0.5 * (state.t - prev_t) * (prev + rate);
        prev = rate;
        prev_t = state.t;
        out.push((terms.quadratic - first.quadratic + integral).abs() / scale);
    }
    out
}

/// Energy-balance residual over a whole segment (≥ 2 samples).
pub fn identity_residual(
    segment: &[State],
    ops: &AssembledOperators,
    params: &ModelParams,
    source: IdentitySource<'_>,
) -> Result<f64, DiagnosticsError> {
    if segment.len() < 2 {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: 2,
            got: segment.len(),
        });
    }
    Ok(*cumulative_identity_residuals(segment, ops, params, source)
        .last()
        .unwrap())
}

pub fn attach_identity_residuals(
    traj: &mut Trajectory,
    ops: &AssembledOperators,
    params: &ModelParams,
) {
    let residuals = cumulative_identity_residuals(&traj.states, ops, params, IdentitySource::Live);
    for (report, r) in traj.reports.iter_mut().zip(residuals) {
        report.identity_residual = r;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Floor {
    Gradient,
    Lp,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FloorViolation {
    pub index: usize,
    pub t: f64,
    pub floor: Floor,
    pub observed: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloorCheck {
    pub alpha2: f64,
    pub violations: Vec<FloorViolation>,
}

pub const DEFAULT_FLOOR_TOL: f64 = 1e-3;

/// Flags samples with `‖∇u‖₂ < (1−tol)α₂` or `‖u‖_p < (1−tol)Bα₂`.
/// Requires `E(0) < d` and `‖∇u₀‖₂ > α₁` at the first report.
pub fn well_floor_check(
    reports: &[EnergyReport],
    thresholds: &ThresholdConstants,
    tol: f64,
) -> Result<FloorCheck, DiagnosticsError> {
    let first = reports
        .first()
        .ok_or(DiagnosticsError::InsufficientSamples { needed: 1, got: 0 })?;
    if !(first.e < thresholds.d) {
        return Err(DiagnosticsError::HypothesisNotMet(format!(
            "E(0) = {} is not below d = {}",
            first.e, thresholds.d
        )));
    }
    if !(first.h1semi_u > thresholds.alpha1) {
        return Err(DiagnosticsError::HypothesisNotMet(format!(
            "||grad u0|| = {} is not above alpha1 = {}",
            first.h1semi_u, thresholds.alpha1
        )));
    }
    let alpha2 = thresholds.alpha2(first.e)?.value;
    let grad_floor = (1.0 - tol) * alpha2;
    let lp_floor = (1.0 - tol) * thresholds.b * alpha2;
    let mut violations = Vec::new();
    for (index, r) in reports.iter().enumerate() {
        if !(r.h1semi_u >= grad_floor) {
            violations.push(FloorViolation {
                index,
                t: r.t,
                floor: Floor::Gradient,
                observed: r.h1semi_u,
                bound: grad_floor,
            });
        }
        let lp = r.lp_norm(thresholds.p);
        if !(lp >= lp_floor) {
            violations.push(FloorViolation {
                index,
                t: r.t,
                floor: Floor::Lp,
                observed: lp,
                bound: lp_floor,
            });
        }
    }
    Ok(FloorCheck { alpha2, violations })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub mu_hat: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_samples: usize,
}

/// Least-squares line through `(t, ln y)`.
pub fn growth_fit(samples: &[(f64, f64)]) -> Result<GrowthFit, DiagnosticsError> {
    if samples.len() < 2 {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if let Some(&(t, value)) = samples.iter().find(|(_, y)| !(*y > 0.0) || !y.is_finite()) {
        return Err(DiagnosticsError::NonpositiveSamples { t, value });
    }
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let y_mean = samples.iter().map(|s| s.1.ln()).sum::<f64>() / n;
    let (mut stt, mut sty, mut syy) = (0.0, 0.0, 0.0);
    for &(t, y) in samples {
        let (dt, dy) = (t - t_mean, y.ln() - y_mean);
        stt += dt * dt;
        sty += dt * dy;
        syy += dy * dy;
    }
    if stt == 0.0 {
        return Err(DiagnosticsError::InsufficientSamples { needed: 2, got: 1 });
    }
    let mu_hat = sty / stt;
    let intercept = y_mean - mu_hat * t_mean;
    let ss_res = (syy - mu_hat * sty).max(0.0);
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(GrowthFit {
        mu_hat,
        intercept,
        r_squared,
        n_samples: samples.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthChannel {
    L,
    LpUP,
}

/// Fits a channel over `[t_a, t_b]`.
pub fn fit_channel(
    reports: &[EnergyReport],
    channel: GrowthChannel,
    window: (f64, f64),
) -> Result<GrowthFit, DiagnosticsError> {
    let samples: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.t >= window.0 && r.t <= window.1)
        .map(|r| {
            let y = match channel {
                GrowthChannel::L => r.l,
                GrowthChannel::LpUP => r.lp_u_p,
            };
            (r.t, y)
        })
        .collect();
    growth_fit(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble, Mesh1D};
    use crate::integrate::{run, StepControl};
    use crate::model::{InitialData, Profile};

    fn ops(n: usize) -> AssembledOperators {
        assemble(&Mesh1D::uniform(n).unwrap()).unwrap()
    }

    #[test]
    fn zero_state_has_zero_energy() {
        let ops = ops(10);
        let r = energy(
            &State::zero(10),
            &ops,
            &ModelParams::new(0.1, 1.0, 4.0, 2.0),
        );
        assert_eq!(r.e, 0.0);
    }

    #[test]
    fn linear_displacement_energy() {
        let ops = ops(40);
        let init = InitialData::at_rest(Profile::LinearRamp);
        let s = State::initial(&init, &ops);
        let r = energy(&s, &ops, &ModelParams::new(0.0, 0.0, 4.0, 2.0));
        assert!((r.e - 0.45).abs() < 1e-13, "{}", r.e);
    }

    #[test]
    fn channels_rebuild_energy() {
        let ops = ops(17);
        let params = ModelParams::new(0.3, 1.0, 3.3, 2.0);
        let s = State {
            t: 0.0,
            u: (1..=17).map(|i| (i as f64).sin()).collect(),
            v: (1..=17).map(|i| (i as f64 * 0.4).cos()).collect(),
        };
        let r = energy(&s, &ops, &params);
        assert!((r.recompute_energy(&params) - r.e).abs() <= 1e-12 * r.e.abs());
    }

    fn thresholds() -> ThresholdConstants {
        ThresholdConstants::injected(0.7, 4.0).unwrap()
    }

    #[test]
    fn l_equals_h_at_rest_without_viscosity() {
        let ops = ops(20);
        let params = ModelParams::new(0.0, 1.0, 4.0, 2.0);
        let s = State::initial(&InitialData::at_rest(Profile::LinearRamp.scaled(3.0)), &ops);
        let r = energy(&s, &ops, &params);
        let th = thresholds();
        let aux = AuxiliaryFunction::new(
            &AuxiliaryConfig {
                epsilon: 0.3,
                auto_epsilon: false,
            },
            &s,
            &ops,
            &params,
            &th,
        )
        .unwrap();
        assert_eq!(aux.evaluate(&s, &r, &ops, &params), th.d - r.e);
        let zero_eps = AuxiliaryFunction {
            epsilon: 0.0,
            ..aux
        };
        let moving = State {
            v: vec![0.5; 20],
            ..s.clone()
        };
        let rm = energy(&moving, &ops, &params);
        assert_eq!(zero_eps.evaluate(&moving, &rm, &ops, &params), th.d - rm.e);
    }

    #[test]
    fn auto_epsilon_keeps_l0_above_half_h0() {
        let ops = ops(20);
        let params = ModelParams::new(0.4, 1.0, 4.0, 2.0);
        let th = thresholds();
        let init = InitialData::new(
            Profile::LinearRamp.scaled(3.0),
            Profile::QuadraticBump.scaled(-0.3),
        );
        let s = State::initial(&init, &ops);
        let aux =
            AuxiliaryFunction::new(&AuxiliaryConfig::default(), &s, &ops, &params, &th).unwrap();
        let l0 = aux.evaluate(&s, &energy(&s, &ops, &params), &ops, &params);
        assert!(aux.h0 > 0.0);
        assert!(l0 >= 0.5 * aux.h0, "L(0) = {l0}, H(0) = {}", aux.h0);
    }

    #[test]
    fn nonpositive_gap_rejected() {
        let ops = ops(10);
        let params = ModelParams::new(0.1, 1.0, 4.0, 2.0);
        let s = State::initial(
            &InitialData::at_rest(Profile::SineHalfwave.scaled(1.5)),
            &ops,
        );
        let th = ThresholdConstants::injected(1.0, 4.0).unwrap(); // d = 0.25
        assert!(matches!(
            AuxiliaryFunction::new(&AuxiliaryConfig::default(), &s, &ops, &params, &th),
            Err(DiagnosticsError::NonpositiveWellGap(_))
        ));
    }

    #[test]
    fn identity_holds_for_conservative_run() {
        let ops = ops(32);
        let params = ModelParams::new(0.0, 0.0, 4.0, 2.0).without_source();
        let traj = run(
            &InitialData::at_rest(Profile::SineHalfwave),
            &ops,
            &params,
            &StepControl::new(1e-2, 1.0),
        )
        .unwrap();
        let r = identity_residual(&traj.states, &ops, &params, IdentitySource::Live).unwrap();
        assert!(r <= 1e-8, "{r}");
        assert!(identity_residual(&traj.states[..1], &ops, &params, IdentitySource::Live).is_err());
    }

    #[test]
    fn floor_check_precondition_gate() {
        let th = ThresholdConstants::injected(1.0, 4.0).unwrap();
        let report = EnergyReport {
            t: 0.0,
            l2_u: 0.1,
            h1semi_u: 0.5,
            lp_u_p: 0.01,
            l2_ut: 0.0,
            l2g1_ut: 0.0,
            e: 0.1,
            h: f64::NAN,
            l: f64::NAN,
            identity_residual: 0.0,
        };
        assert!(matches!(
            well_floor_check(&[report], &th, DEFAULT_FLOOR_TOL),
            Err(DiagnosticsError::HypothesisNotMet(_))
        ));
    }

    #[test]
    fn floor_check_flags_scaled_down_sample() {
        // B = 1, p = 4: α₁ = 1, d = 1/4, and α₂ = √2 for E(0) = 0.
        // A state with ‖∇u‖ = 2, ‖u‖₄⁴ = 5 clears both floors.
        let th = ThresholdConstants::injected(1.0, 4.0).unwrap();
        let good = EnergyReport {
            t: 0.0,
            l2_u: 1.0,
            h1semi_u: 2.0,
            lp_u_p: 5.0,
            l2_ut: 0.0,
            l2g1_ut: 0.0,
            e: 0.0,
            h: f64::NAN,
            l: f64::NAN,
            identity_residual: 0.0,
        };
        let mut reports = vec![good.clone(); 2];
        let ok = well_floor_check(&reports, &th, DEFAULT_FLOOR_TOL).unwrap();
        assert!(ok.violations.is_empty());
        let mut shrunk = good.clone();
        shrunk.t = 1.0;
        shrunk.h1semi_u = 0.2;
        shrunk.lp_u_p = 0.2f64.powi(4);
        reports.push(shrunk);
        let flagged = well_floor_check(&reports, &th, DEFAULT_FLOOR_TOL).unwrap();
        assert_eq!(flagged.violations.len(), 2);
        assert!(flagged.violations.iter().all(|v| v.index == 2));
    }

    #[test]
    fn exact_exponential_fit() {
        let samples: Vec<(f64, f64)> = (0..50)
            .map(|k| k as f64 * 0.1)
            .map(|t| (t, 2.0 * (0.5 * t).exp()))
            .collect();
        let fit = growth_fit(&samples).unwrap();
        assert!((fit.mu_hat - 0.5).abs() <= 1e-10);
        assert!((fit.intercept - 2f64.ln()).abs() <= 1e-10);
        assert!((fit.r_squared - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn constant_channel_has_zero_rate() {
        let samples: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 3.0)).collect();
        let fit = growth_fit(&samples).unwrap();
        assert!(fit.mu_hat.abs() < 1e-15);
    }

    #[test]
    fn nonpositive_samples_rejected() {
        let samples = [(0.0, 1.0), (1.0, -1.0), (2.0, 3.0)];
        assert!(matches!(
            growth_fit(&samples),
            Err(DiagnosticsError::NonpositiveSamples { t, .. }) if t == 1.0
        ));
    }
}
