//! Fixed-point iteration `u ↦ Φ(u)`, where `Φ(u)` solves the problem with
//! the source frozen to `|u|^{p−2}u`, and the `Y_T` distance between
//! successive iterates.

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::energy;
use crate::discretize::AssembledOperators;
use crate::integrate::{
    run, step_with_source, RunFailure, SourceTerm, State, StepControl, StepError, Termination,
    Trajectory,
};
use crate::model::{InitialData, ModelParams};

#[derive(Debug, Error)]
pub enum PicardError {
    #[error("trajectory does not sit on the integrator grid: {0}")]
    GridMismatch(String),
    #[error("frozen-source step failed: {0}")]
    Step(#[from] StepError),
    #[error("direct solve failed: {0}")]
    Direct(#[from] Box<RunFailure>),
    #[error("k_max must be at least 2")]
    TooFewIterations,
}

/// `‖V‖²_{Y_T} = max_t(‖V_t‖₂² + ‖∇V‖₂²) + ‖V_t‖²_{L^m((0,T)×Γ₁)} + ∫₀ᵀ‖∇V_t‖₂²`
/// on a trajectory difference; time integrals by the trapezoid rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct YtNorm {
    pub value: f64,
    pub energy_sup: f64,
    pub boundary: f64,
    pub viscous: f64,
}

pub fn yt_norm(
    a: &Trajectory,
    b: &Trajectory,
    ops: &AssembledOperators,
    m: f64,
) -> Result<YtNorm, PicardError> {
    if a.states.len() != b.states.len() {
        return Err(PicardError::GridMismatch(format!(
            "{} samples against {}",
            a.states.len(),
            b.states.len()
        )));
    }
    let mut energy_sup: f64 = 0.0;
    let mut boundary_int = 0.0;
    let mut viscous = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        if (sa.t - sb.t).abs() > 1e-12 * (1.0 + sa.t.abs()) {
            return Err(PicardError::GridMismatch(format!(
                "t = {} against t = {}",
                sa.t, sb.t
            )));
        }
        let du: Vec<f64> = sa.u.iter().zip(&sb.u).map(|(x, y)| x - y).collect();
        let dv: Vec<f64> = sa.v.iter().zip(&sb.v).map(|(x, y)| x - y).collect();
        energy_sup = energy_sup.max(ops.l2_norm_sq(&dv) + ops.h1_seminorm_sq(&du));
        let tip = ops.trace(&dv).abs().powf(m);
        let grad_v = ops.h1_seminorm_sq(&dv);
        if let Some((t0, tip0, grad0)) = prev {
            let h = sa.t - t0;
            boundary_int += 0.5 * h * (tip0 + tip);
            viscous += 0.5 * h * (grad0 + grad_v);
        }
        prev = Some((sa.t, tip, grad_v));
    }
    let boundary = boundary_int.powf(2.0 / m);
    Ok(YtNorm {
        value: (energy_sup + boundary + viscous).sqrt(),
        energy_sup,
        boundary,
        viscous,
    })
}

fn check_grid(traj: &Trajectory, ctl: &StepControl) -> Result<(), PicardError> {
    let n = ctl.n_steps();
    if traj.output_every != 1 || traj.states.len() != n + 1 {
        return Err(PicardError::GridMismatch(format!(
            "expected {} samples at stride 1, got {} at stride {}",
            n + 1,
            traj.states.len(),
            traj.output_every
        )));
    }
    for (k, s) in traj.states.iter().enumerate() {
        let t = k as f64 * ctl.dt;
        if (s.t - t).abs() > 1e-9 * ctl.dt {
            return Err(PicardError::GridMismatch(format!(
                "sample {k} at t = {} instead of {t}",
                s.t
            )));
        }
    }
    Ok(())
}

/// `Φ(u)`: integrates from the initial data with the source at step
/// `n → n+1` frozen to `S((uⁿ + uⁿ⁺¹)/2)` taken from `u_traj`. The direct
/// solver's trajectory is therefore a fixed point.
pub fn apply_phi(
    u_traj: &Trajectory,
    init: &InitialData,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
) -> Result<Trajectory, PicardError> {
    ctl.check()?;
    check_grid(u_traj, ctl)?;
    let initial = State::initial(init, ops);
    let mut states = vec![initial.clone()];
    let mut reports = vec![energy(&initial, ops, params)];
    let mut current = initial;
    for k in 0..ctl.n_steps() {
        let mid: Vec<f64> = u_traj.states[k]
            .u
            .iter()
            .zip(&u_traj.states[k + 1].u)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let load = ops.source_load(&mid, params.p);
        let mut next = step_with_source(&current, ops, params, ctl, SourceTerm::Frozen(&load))?;
        next.t = (k + 1) as f64 * ctl.dt;
        reports.push(energy(&next, ops, params));
        states.push(next.clone());
        current = next;
    }
    Ok(Trajectory {
        states,
        reports,
        termination: Termination::TEnd,
        dt: ctl.dt,
        output_every: 1,
    })
}

/// `u⁰(t) = u₀ + t u₁` sampled on the integrator grid, with velocity `u₁`.
pub fn shift_guess(
    init: &InitialData,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
) -> Trajectory {
    let base = State::initial(init, ops);
    let states: Vec<State> = (0..=ctl.n_steps())
        .map(|k| {
            let t = k as f64 * ctl.dt;
            State {
                t,
                u: base.u.iter().zip(&base.v).map(|(u, v)| u + t * v).collect(),
                v: base.v.clone(),
            }
        })
        .collect();
    let reports = states.iter().map(|s| energy(s, ops, params)).collect();
    Trajectory {
        states,
        reports,
        termination: Termination::TEnd,
        dt: ctl.dt,
        output_every: 1,
    }
}

#[derive(Clone, Debug)]
pub struct PicardRun {
    pub t_horizon: f64,
    pub iterates: Vec<Trajectory>,
    /// `d_k = ‖u^{k} − u^{k−1}‖_{Y_T}`.
    pub distances: Vec<f64>,
    /// Largest `Y_T` norm of any iterate.
    pub r_ball: f64,
    pub converged: bool,
}

impl PicardRun {
    /// `ρ_k = d_{k+1} / d_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.distances.windows(2).map(|w| w[1] / w[0]).collect()
    }

    pub fn median_ratio(&self) -> Option<f64> {
        let mut r = self.ratios();
        if r.is_empty() {
            return None;
        }
        r.sort_by(f64::total_cmp);
        let n = r.len();
        Some(if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        })
    }

    pub fn last(&self) -> &Trajectory {
        self.iterates
            .last()
            .expect("a Picard run holds at least the initial guess")
    }
}

/// Iterates from `u⁰ = φ` until the `Y_T` distance drops to `tol` or
/// `k_max` applications of `Φ` have been made. Non-convergence is reported
/// through [`PicardRun::converged`].
pub fn picard_iterate(
    init: &InitialData,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
    k_max: usize,
    tol: f64,
) -> Result<PicardRun, PicardError> {
    if k_max < 2 {
        return Err(PicardError::TooFewIterations);
    }
    let zero = Trajectory {
        states: (0..=ctl.n_steps())
            .map(|k| State {
                t: k as f64 * ctl.dt,
                ..State::zero(ops.n_dof())
            })
            .collect(),
        reports: vec![],
        termination: Termination::TEnd,
        dt: ctl.dt,
        output_every: 1,
    };
    let guess = shift_guess(init, ops, params, ctl);
    let mut r_ball = yt_norm(&guess, &zero, ops, params.m)?.value;
    let mut iterates = vec![guess];
    let mut distances = vec![];
    let mut converged = false;
    for _ in 0..k_max {
        let next = apply_phi(iterates.last().unwrap(), init, ops, params, ctl)?;
        let d = yt_norm(&next, iterates.last().unwrap(), ops, params.m)?.value;
        r_ball = r_ball.max(yt_norm(&next, &zero, ops, params.m)?.value);
        distances.push(d);
        iterates.push(next);
        if d <= tol {
            converged = true;
            break;
        }
    }
    Ok(PicardRun {
        t_horizon: ctl.t_end,
        iterates,
        distances,
        r_ball,
        converged,
    })
}

/// `Y_T` distance from the last iterate to the direct nonlinear solve.
pub fn distance_to_direct(
    picard: &PicardRun,
    init: &InitialData,
    ops: &AssembledOperators,
    params: &ModelParams,
    ctl: &StepControl,
) -> Result<f64, PicardError> {
    let mut direct_ctl = ctl.clone();
    direct_ctl.output_every = 1;
    let direct = run(init, ops, params, &direct_ctl).map_err(Box::new)?;
    Ok(yt_norm(picard.last(), &direct, ops, params.m)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{assemble, Mesh1D};

    #[test]
    fn phi_of_zero_is_zero() {
        let ops = assemble(&Mesh1D::uniform(8).unwrap()).unwrap();
        let params = ModelParams::new(0.1, 1.0, 4.0, 2.0);
        let ctl = StepControl::new(0.01, 0.05);
        let init = InitialData::zero();
        let guess = shift_guess(&init, &ops, &params, &ctl);
        let out = apply_phi(&guess, &init, &ops, &params, &ctl).unwrap();
        assert!(out
            .states
            .iter()
            .all(|s| s.u.iter().chain(&s.v).all(|&x| x == 0.0)));
    }

    #[test]
    fn wrong_grid_rejected() {
        let ops = assemble(&Mesh1D::uniform(8).unwrap()).unwrap();
        let params = ModelParams::new(0.1, 1.0, 4.0, 2.0);
        let ctl = StepControl::new(0.01, 0.05);
        let init = InitialData::zero();
        let guess = shift_guess(&init, &ops, &params, &StepControl::new(0.01, 0.04));
        assert!(matches!(
            apply_phi(&guess, &init, &ops, &params, &ctl),
            Err(PicardError::GridMismatch(_))
        ));
    }

    #[test]
    fn median_of_ratios() {
        let run = PicardRun {
            t_horizon: 1.0,
            iterates: vec![],
            distances: vec![1.0, 0.5, 0.1, 0.05],
            r_ball: 0.0,
            converged: false,
        };
        assert_eq!(run.ratios(), vec![0.5, 0.2, 0.5]);
        assert_eq!(run.median_ratio(), Some(0.5));
    }
}
