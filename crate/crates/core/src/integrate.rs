//! Implicit midpoint time stepping for
//! `(M + Bg) v̇ = -K u - αK v - G(v) + S(u)`, `u̇ = v`.
//!
//! Each step solves for `vⁿ⁺¹` with Newton's method; `uⁿ⁺¹` follows from
//! `uⁿ⁺¹ = uⁿ + dt·(vⁿ + vⁿ⁺¹)/2`. The Jacobian is tridiagonal, so every
//! linear solve is a Thomas sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::{energy, EnergyReport};
use crate::discretize::{boundary_damping, boundary_damping_jacobian, max_abs, AssembledOperators};
use crate::model::{InitialData, ModelParams};

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub t: f64,
    /// Nodal displacement on the free nodes.
    pub u: Vec<f64>,
    /// Nodal velocity on the free nodes.
    pub v: Vec<f64>,
}

impl State {
    pub fn zero(n_dof: usize) -> Self {
        Self {
            t: 0.0,
            u: vec![0.0; n_dof],
            v: vec![0.0; n_dof],
        }
    }

    pub fn initial(init: &InitialData, ops: &AssembledOperators) -> Self {
        let mesh = ops.mesh();
        Self {
            t: 0.0,
            u: ops.restrict(&init.u0.interpolate(mesh)),
            v: ops.restrict(&init.u1.interpolate(mesh)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "defaults::newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "defaults::newton_max_iter")]
    pub newton_max_iter: usize,
    #[serde(default = "defaults::output_every")]
    pub output_every: usize,
    #[serde(default = "defaults::blowup_guard")]
    pub blowup_guard: f64,
    /// Regularizer of the tip-damping slope in the Newton Jacobian.
    #[serde(default = "defaults::jacobian_eta")]
    pub jacobian_eta: f64,
}

pub(crate) mod defaults {
    pub fn newton_tol() -> f64 {
        1e-12
    }
    pub fn newton_max_iter() -> usize {
        50
    }
    pub fn output_every() -> usize {
        1
    }
    pub fn blowup_guard() -> f64 {
        1e8
    }
    pub fn jacobian_eta() -> f64 {
        1e-12
    }
}

impl StepControl {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            newton_tol: defaults::newton_tol(),
            newton_max_iter: defaults::newton_max_iter(),
            output_every: defaults::output_every(),
            blowup_guard: defaults::blowup_guard(),
            jacobian_eta: defaults::jacobian_eta(),
        }
    }

    /// Number of fixed steps covering `[0, t_end]`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round().max(0.0) as usize
    }

    pub fn check(&self) -> Result<(), StepError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(StepError::InvalidControl("dt must be positive"));
        }
        if !(self.newton_tol > 0.0) {
            return Err(StepError::InvalidControl("newton_tol must be positive"));
        }
        if !(self.t_end >= 0.0) {
            return Err(StepError::InvalidControl("t_end must be nonnegative"));
        }
        if self.output_every == 0 {
            return Err(StepError::InvalidControl("output_every must be at least 1"));
        }
        if self.newton_max_iter == 0 {
            return Err(StepError::InvalidControl(
                "newton_max_iter must be at least 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("Newton iteration did not converge at t = {t}: residual {residual:e}")]
    NewtonDiverged { t: f64, residual: f64 },
    #[error("blow-up guard exceeded at t = {t}: sup|u| = {sup_norm:e}")]
    BlowupDetected { t: f64, sup_norm: f64 },
    #[error("invalid step control: {0}")]
    InvalidControl(&'static str),
    #[error("state length {got} does not match {expected} degrees of freedom")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Where the right-hand side `S` of a step comes from.
#[derive(Clone, Copy, Debug)]
pub enum SourceTerm<'a> {
    /// `S(u*)` evaluated on the unknown midpoint displacement.
    Live,
    /// A prescribed load vector, held fixed during the step.
    Frozen(&'a [f64]),
}

/// One implicit midpoint step with the live source.
pub fn step(
    state: &State,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
) -> Result<State, StepError> {
    step_with_source(state, ops, params, ctl, SourceTerm::Live)
}

pub fn step_with_source(
    state: &State,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
    source: SourceTerm<'_>,
) -> Result<State, StepError> {
    let n = ops.n_dof();
    if state.u.len() != n || state.v.len() != n {
        return Err(StepError::DimensionMismatch {
            expected: n,
            got: state.u.len().min(state.v.len()),
        });
    }
    let dt = ctl.dt;
    let t_next = state.t + dt;
    let k = ops.boundary_dof();
    let inertia = ops.inertia();
    let stiffness = &ops.stiffness;

    let mut w = state.v.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..=ctl.newton_max_iter {
        let v_mid: Vec<f64> = state.v.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
        let u_mid: Vec<f64> = state
            .u
            .iter()
            .zip(&v_mid)
            .map(|(u, v)| u + 0.5 * dt * v)
            .collect();

        let dv: Vec<f64> = w.iter().zip(&state.v).map(|(a, b)| (a - b) / dt).collect();
        let accel = inertia.matvec(&dv);
        let elastic = stiffness.matvec(&u_mid);
        let viscous = stiffness.matvec(&v_mid);
        let load: Vec<f64> = match (params.source, source) {
            (false, _) => vec![0.0; n],
            (true, SourceTerm::Live) => ops.source_load(&u_mid, params.p),
            (true, SourceTerm::Frozen(f)) => f.to_vec(),
        };
        let tip = boundary_damping(v_mid[k], params.r, params.m);

        let mut f: Vec<f64> = (0..n)
            .map(|i| accel[i] + elastic[i] + params.alpha * viscous[i] - load[i])
            .collect();
        f[k] += tip;

        residual = max_abs(&f);
        let scale = 1.0 + max_abs(&accel) + max_abs(&elastic) + max_abs(&load);
        if !residual.is_finite() {
            break;
        }
        if residual <= ctl.newton_tol * scale {
            let u_next: Vec<f64> = state
                .u
                .iter()
                .zip(&v_mid)
                .map(|(u, v)| u + dt * v)
                .collect();
            let sup_norm = max_abs(&u_next);
            if !(sup_norm <= ctl.blowup_guard) {
                return Err(StepError::BlowupDetected {
                    t: t_next,
                    sup_norm,
                });
            }
            return Ok(State {
                t: t_next,
                u: u_next,
                v: w,
            });
        }

        let mut jac = inertia.combine(1.0 / dt, stiffness, 0.25 * dt + 0.5 * params.alpha);
        jac.diag[k] +=
            0.5 * boundary_damping_jacobian(v_mid[k], params.r, params.m, ctl.jacobian_eta);
        if params.source && matches!(source, SourceTerm::Live) {
            let sj = ops.source_jacobian(&u_mid, params.p);
            jac = jac.combine(1.0, &sj, -0.25 * dt);
        }
        let Some(delta) = jac.solve(&f) else {
            break;
        };
        for (wi, di) in w.iter_mut().zip(&delta) {
            *wi -= di;
        }
    }
    Err(StepError::NewtonDiverged {
        t: t_next,
        residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum Termination {
    TEnd,
    BlowupDetected { t: f64, sup_norm: f64 },
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::TEnd => "t_end",
            Termination::BlowupDetected { .. } => "blowup",
        }
    }
}

/// Sampled states with their energy channels.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub reports: Vec<EnergyReport>,
    pub termination: Termination,
    pub dt: f64,
    pub output_every: usize,
}

impl Trajectory {
    pub fn final_time(&self) -> f64 {
        self.states.last().map_or(0.0, |s| s.t)
    }

    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }
}

/// A step failure with everything computed before it.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub error: StepError,
    pub partial: Trajectory,
}

/// Integrates from the initial data to `t_end`, sampling every
/// `output_every` steps (the final state is always sampled). A blow-up
/// guard hit ends the run normally with [`Termination::BlowupDetected`].
pub fn run(
    init: &InitialData,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
) -> Result<Trajectory, RunFailure> {
    run_from(State::initial(init, ops), ops, params, ctl)
}

pub fn run_from(
    initial: State,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
) -> Result<Trajectory, RunFailure> {
    let mut traj = Trajectory {
        reports: vec![energy(&initial, ops, params)],
        states: vec![initial.clone()],
        termination: Termination::TEnd,
        dt: ctl.dt,
        output_every: ctl.output_every,
    };
    if let Err(error) = ctl.check() {
        return Err(RunFailure {
            error,
            partial: traj,
        });
    }
    let n_steps = ctl.n_steps();
    let mut current = initial;
    for k in 1..=n_steps {
        match step(&current, ops, params, ctl) {
            Ok(mut next) => {
                next.t = k as f64 * ctl.dt;
                current = next;
            }
            Err(StepError::BlowupDetected { t, sup_norm }) => {
                if traj.states.last().map(|s| s.t) != Some(current.t) {
                    traj.reports.push(energy(&current, ops, params));
                    traj.states.push(current);
                }
                traj.termination = Termination::BlowupDetected { t, sup_norm };
                return Ok(traj);
            }
            Err(error) => {
                if traj.states.last().map(|s| s.t) != Some(current.t) {
                    traj.reports.push(energy(&current, ops, params));
                    traj.states.push(current);
                }
                return Err(RunFailure {
                    error,
                    partial: traj,
                });
            }
        }
        if k % ctl.output_every == 0 || k == n_steps {
            traj.reports.push(energy(&current, ops, params));
            traj.states.push(current.clone());
        }
    }
    Ok(traj)
}
