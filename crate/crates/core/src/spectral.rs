//! Faedo–Galerkin solver on a small basis orthonormal in
//! `⟨f, g⟩ = ∫₀¹ f g dx + f(1) g(1)`, used as an independent check on the
//! finite-element trajectories.
//!
//! With an orthonormal basis the coefficient system is already in normal form:
//!
//! ```text
//! g″ⱼ = −⟨∇u, ∇wⱼ⟩ − α⟨∇u_t, ∇wⱼ⟩ − r|u_t(1)|^{m−2}u_t(1) wⱼ(1) + ∫ |u|^{p−2}u wⱼ
//! ```
//!
//! In shifted mode the unknown is `ṽ = u − φ` with `φ(t) = u₀ + t u₁`, so the
//! coefficients start from rest.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{signed_power, AssembledOperators};
use crate::integrate::Trajectory;
use crate::model::{InitialData, ModelParams, Profile};
use crate::ode::{dopri5, OdeError, OdeOptions};
use crate::quadrature::GaussRule;

const GRID_ELEMENTS: usize = 256;
const GRID_POINTS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("basis needs at least one mode")]
    NoModes,
    #[error("generator {index} is numerically dependent on the previous ones")]
    RankDeficient { index: usize },
    #[error("sample grids differ: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    /// `x, x², x³, …`
    Monomials,
    /// `sin((k − ½)πx)`, the modes with `w(0) = 0`, `w′(1) = 0`.
    DirichletNeumannSines,
}

impl Generator {
    fn eval(self, k: usize, x: f64) -> f64 {
        match self {
            Generator::Monomials => x.powi(k as i32 + 1),
            Generator::DirichletNeumannSines => (sine_frequency(k) * x).sin(),
        }
    }

    fn deriv(self, k: usize, x: f64) -> f64 {
        match self {
            Generator::Monomials => (k + 1) as f64 * x.powi(k as i32),
            Generator::DirichletNeumannSines => {
                let mu = sine_frequency(k);
                mu * (mu * x).cos()
            }
        }
    }
}

fn sine_frequency(k: usize) -> f64 {
    (k as f64 + 0.5) * PI
}

/// Orthonormal basis sampled on a fine composite Gauss grid.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub generator: Generator,
    /// `coeffs[j][k]`: weight of generator `k` in basis function `j`.
    pub coeffs: Vec<Vec<f64>>,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    pub trace: Vec<f64>,
    /// `⟨∇wᵢ, ∇wⱼ⟩`.
    pub stiffness: Vec<Vec<f64>>,
}

pub fn build_basis(n_modes: usize, generator: Generator) -> Result<SpectralBasis, SpectralError> {
    if n_modes == 0 {
        return Err(SpectralError::NoModes);
    }
    let rule = GaussRule::new(GRID_POINTS);
    let h = 1.0 / GRID_ELEMENTS as f64;
    let (points, weights): (Vec<f64>, Vec<f64>) = (0..GRID_ELEMENTS)
        .flat_map(|e| {
            rule.mapped(e as f64 * h, (e + 1) as f64 * h)
                .collect::<Vec<_>>()
        })
        .unzip();

    // Modified Gram-Schmidt, twice, on the sampled functions themselves:
    // orthogonalizing coefficient vectors through the monomial Gram matrix
    // loses about as many digits as that matrix's condition number.
    let mut coeffs: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    let mut derivs: Vec<Vec<f64>> = Vec::with_capacity(n_modes);
    let mut trace: Vec<f64> = Vec::with_capacity(n_modes);
    for j in 0..n_modes {
        let mut c = vec![0.0; n_modes];
        c[j] = 1.0;
        let mut v: Vec<f64> = points.iter().map(|&x| generator.eval(j, x)).collect();
        let mut dv: Vec<f64> = points.iter().map(|&x| generator.deriv(j, x)).collect();
        let mut tr = generator.eval(j, 1.0);
        let start_norm = (integrate_product(&weights, &v, &v) + tr * tr).sqrt();
        for _pass in 0..2 {
            for q in 0..coeffs.len() {
                let proj = integrate_product(&weights, &v, &values[q]) + tr * trace[q];
                axpy(&mut c, -proj, &coeffs[q]);
                axpy(&mut v, -proj, &values[q]);
                axpy(&mut dv, -proj, &derivs[q]);
                tr -= proj * trace[q];
            }
        }
        let norm = (integrate_product(&weights, &v, &v) + tr * tr)
            .max(0.0)
            .sqrt();
        if !(norm > 1e-10 * start_norm) {
            return Err(SpectralError::RankDeficient { index: j });
        }
        for x in c.iter_mut().chain(v.iter_mut()).chain(dv.iter_mut()) {
            *x /= norm;
        }
        coeffs.push(c);
        values.push(v);
        derivs.push(dv);
        trace.push(tr / norm);
    }
    let stiffness = (0..n_modes)
        .map(|i| {
            (0..n_modes)
                .map(|j| integrate_product(&weights, &derivs[i], &derivs[j]))
                .collect()
        })
        .collect();

    Ok(SpectralBasis {
        generator,
        coeffs,
        points,
        weights,
        values,
        derivs,
        trace,
        stiffness,
    })
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn integrate_product(weights: &[f64], a: &[f64], b: &[f64]) -> f64 {
    weights
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

impl SpectralBasis {
    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }

    /// Gram matrix of the stored samples in the combined inner product.
    pub fn gram(&self) -> Vec<Vec<f64>> {
        let n = self.n_modes();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        integrate_product(&self.weights, &self.values[i], &self.values[j])
                            + self.trace[i] * self.trace[j]
                    })
                    .collect()
            })
            .collect()
    }

    /// Coefficients of the orthogonal projection of `f`.
    pub fn project(&self, f: &Profile) -> Vec<f64> {
        let samples: Vec<f64> = self.points.iter().map(|&x| f.eval(x)).collect();
        let f1 = f.eval(1.0);
        (0..self.n_modes())
            .map(|j| {
                integrate_product(&self.weights, &samples, &self.values[j]) + f1 * self.trace[j]
            })
            .collect()
    }

    /// Samples of `Σ cⱼ wⱼ` on the grid.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.points.len()];
        for (cj, wj) in c.iter().zip(&self.values) {
            for (o, w) in out.iter_mut().zip(wj) {
                *o += cj * w;
            }
        }
        out
    }

    pub fn trace_of(&self, c: &[f64]) -> f64 {
        c.iter().zip(&self.trace).map(|(a, b)| a * b).sum()
    }

    pub fn l2_norm(&self, samples: &[f64]) -> f64 {
        integrate_product(&self.weights, samples, samples)
            .max(0.0)
            .sqrt()
    }
}

/// `φ(t, x) = u₀(x) + t u₁(x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftFunction {
    pub u0: Profile,
    pub u1: Profile,
}

impl ShiftFunction {
    pub fn new(init: &InitialData) -> Self {
        Self {
            u0: init.u0.clone(),
            u1: init.u1.clone(),
        }
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        self.u0.eval(x) + t * self.u1.eval(x)
    }

    pub fn eval_t(&self, x: f64) -> f64 {
        self.u1.eval(x)
    }

    pub fn deriv_x(&self, t: f64, x: f64) -> f64 {
        self.u0.deriv(x) + t * self.u1.deriv(x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralMode {
    Direct,
    Shifted,
}

/// Precomputed grid samples of the shift and its gradient pairing with
/// the basis.
struct ShiftData {
    u0: Vec<f64>,
    u1: Vec<f64>,
    u1_trace: f64,
    /// `⟨∇u₀, ∇wⱼ⟩`
    grad0: Vec<f64>,
    /// `⟨∇u₁, ∇wⱼ⟩`
    grad1: Vec<f64>,
}

impl ShiftData {
    fn new(shift: &ShiftFunction, basis: &SpectralBasis) -> Self {
        let sample =
            |f: &dyn Fn(f64) -> f64| -> Vec<f64> { basis.points.iter().map(|&x| f(x)).collect() };
        let du0 = sample(&|x| shift.u0.deriv(x));
        let du1 = sample(&|x| shift.u1.deriv(x));
        Self {
            u0: sample(&|x| shift.u0.eval(x)),
            u1: sample(&|x| shift.u1.eval(x)),
            u1_trace: shift.eval_t(1.0),
            grad0: basis
                .derivs
                .iter()
                .map(|d| integrate_product(&basis.weights, &du0, d))
                .collect(),
            grad1: basis
                .derivs
                .iter()
                .map(|d| integrate_product(&basis.weights, &du1, d))
                .collect(),
        }
    }
}

fn rhs(
    t: f64,
    g: &[f64],
    gdot: &[f64],
    basis: &SpectralBasis,
    params: &ModelParams,
    shift: Option<&ShiftData>,
    out: &mut [f64],
) {
    let n = basis.n_modes();
    let mut u = basis.synthesize(g);
    let mut ut_trace = basis.trace_of(gdot);
    if let Some(s) = shift {
        for ((ui, a), b) in u.iter_mut().zip(&s.u0).zip(&s.u1) {
            *ui += a + t * b;
        }
        ut_trace += s.u1_trace;
    }
    let tip = params.r * signed_power(ut_trace, params.m);
    let source: Option<Vec<f64>> = params.source.then(|| {
        u.iter()
            .zip(&basis.weights)
            .map(|(ui, w)| w * signed_power(*ui, params.p))
            .collect()
    });
    for (j, slot) in out.iter_mut().enumerate() {
        let mut elastic = 0.0;
        let mut viscous = 0.0;
        for i in 0..n {
            elastic += basis.stiffness[j][i] * g[i];
            viscous += basis.stiffness[j][i] * gdot[i];
        }
        if let Some(s) = shift {
            elastic += s.grad0[j] + t * s.grad1[j];
            viscous += s.grad1[j];
        }
        let mut acc = -elastic - params.alpha * viscous - tip * basis.trace[j];
        if let Some(f) = &source {
            acc += f
                .iter()
                .zip(&basis.values[j])
                .map(|(a, b)| a * b)
                .sum::<f64>();
        }
        *slot = acc;
    }
}

/// Second derivatives of the coefficients at time `t`.
pub fn spectral_rhs(
    t: f64,
    g: &[f64],
    gdot: &[f64],
    basis: &SpectralBasis,
    params: &ModelParams,
    shift: Option<&ShiftFunction>,
) -> Vec<f64> {
    let data = shift.map(|s| ShiftData::new(s, basis));
    let mut out = vec![0.0; basis.n_modes()];
    rhs(t, g, gdot, basis, params, data.as_ref(), &mut out);
    out
}

#[derive(Clone, Debug)]
pub struct SpectralTrajectory {
    pub mode: SpectralMode,
    pub times: Vec<f64>,
    pub g: Vec<Vec<f64>>,
    pub gdot: Vec<Vec<f64>>,
    pub shift: Option<ShiftFunction>,
}

impl SpectralTrajectory {
    /// Displacement samples on the basis grid at output `k`, shift included.
    pub fn displacement(&self, basis: &SpectralBasis, k: usize) -> Vec<f64> {
        let mut u = basis.synthesize(&self.g[k]);
        if let Some(s) = &self.shift {
            let t = self.times[k];
            for (ui, x) in u.iter_mut().zip(&basis.points) {
                *ui += s.eval(t, *x);
            }
        }
        u
    }
}

pub fn solve_spectral(
    basis: &SpectralBasis,
    params: &ModelParams,
    init: &InitialData,
    mode: SpectralMode,
    times: &[f64],
    tol: f64,
) -> Result<SpectralTrajectory, SpectralError> {
    let n = basis.n_modes();
    let (g0, gdot0, shift) = match mode {
        SpectralMode::Direct => (basis.project(&init.u0), basis.project(&init.u1), None),
        SpectralMode::Shifted => (vec![0.0; n], vec![0.0; n], Some(ShiftFunction::new(init))),
    };
    let data = shift.as_ref().map(|s| ShiftData::new(s, basis));
    let y0: Vec<f64> = g0.iter().chain(&gdot0).copied().collect();
    let ys = dopri5(
        |t, y, dy| {
            let (g, gdot) = y.split_at(n);
            dy[..n].copy_from_slice(gdot);
            rhs(t, g, gdot, basis, params, data.as_ref(), &mut dy[n..]);
        },
        0.0,
        &y0,
        times,
        &OdeOptions::with_tol(tol),
    )?;
    let (g, gdot) = ys
        .into_iter()
        .map(|y| (y[..n].to_vec(), y[n..].to_vec()))
        .unzip();
    Ok(SpectralTrajectory {
        mode,
        times: times.to_vec(),
        g,
        gdot,
        shift,
    })
}

fn check_times(a: &[f64], b: &[f64]) -> Result<(), SpectralError> {
    if a.len() != b.len() {
        return Err(SpectralError::GridMismatch(format!(
            "{} samples against {}",
            a.len(),
            b.len()
        )));
    }
    if let Some((x, y)) = a
        .iter()
        .zip(b)
        .find(|(x, y)| (*x - *y).abs() > 1e-12 * (1.0 + x.abs()))
    {
        return Err(SpectralError::GridMismatch(format!(
            "t = {x} against t = {y}"
        )));
    }
    Ok(())
}

/// `sup_t ‖u_direct − (ṽ + φ)‖_{L²}`.
pub fn shift_equivalence_check(
    direct: &SpectralTrajectory,
    shifted: &SpectralTrajectory,
    basis: &SpectralBasis,
) -> Result<f64, SpectralError> {
    check_times(&direct.times, &shifted.times)?;
    let mut gap: f64 = 0.0;
    for k in 0..direct.times.len() {
        let a = direct.displacement(basis, k);
        let b = shifted.displacement(basis, k);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        gap = gap.max(basis.l2_norm(&diff));
    }
    Ok(gap)
}

/// Evaluates a P1 field (full nodal vector) at sorted points.
fn p1_eval(nodes: &[f64], values: &[f64], points: &[f64]) -> Vec<f64> {
    points
        .iter()
        .map(|&x| {
            let i = nodes.partition_point(|&n| n <= x).clamp(1, nodes.len() - 1);
            let (a, b) = (nodes[i - 1], nodes[i]);
            let s = (x - a) / (b - a);
            values[i - 1] * (1.0 - s) + values[i] * s
        })
        .collect()
}

/// `sup_t ‖u_FEM − u_spectral‖_{L²}` over the common sample times.
pub fn fem_spectral_gap(
    fem: &Trajectory,
    ops: &AssembledOperators,
    spectral: &SpectralTrajectory,
    basis: &SpectralBasis,
) -> Result<f64, SpectralError> {
    check_times(&fem.times(), &spectral.times)?;
    let nodes = ops.mesh().nodes();
    let mut gap: f64 = 0.0;
    for (k, state) in fem.states.iter().enumerate() {
        let a = p1_eval(nodes, &ops.expand(&state.u), &basis.points);
        let b = spectral.displacement(basis, k);
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        gap = gap.max(basis.l2_norm(&diff));
    }
    Ok(gap)
}
