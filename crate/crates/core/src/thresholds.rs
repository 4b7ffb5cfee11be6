//! Potential-well constants: the embedding constant
//! `B = max{‖u‖_p : ‖∇u‖₂ = 1}`, `α₁ = B^{-p/(p-2)}`, the depth
//! `d = (1/2 - 1/p) α₁²`, and the floor `α₂ > α₁` realized through the
//! well function `g(λ) = λ²/2 - (Bᵖ/p) λᵖ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::{
    assemble, dot, lp_norm_pow_full, source_load_full, DiscretizeError, Mesh1D, SymTridiag,
    DEFAULT_QUADRATURE_ORDER,
};
use crate::quadrature::GaussRule;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ThresholdError {
    #[error("p > 2 required (got p = {0})")]
    ExponentTooSmall(f64),
    #[error("embedding constant must be positive (got {0})")]
    NonpositiveConstant(f64),
    #[error("projected ascent did not converge in any of {restarts} restarts")]
    NonConvergence { restarts: usize },
    #[error("hypothesis not met: E(0) = {e0} is not below the well depth d = {d}")]
    HypothesisNotMet { e0: f64, d: f64 },
    #[error(transparent)]
    Mesh(#[from] DiscretizeError),
}

/// Discrete space over which the embedding constant is maximized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSpace {
    /// Zero at both ends.
    #[default]
    H01,
    /// Zero at x = 0 only; the space the solution lives in.
    H1Gamma0,
}

impl EmbeddingSpace {
    pub fn label(&self) -> &'static str {
        match self {
            EmbeddingSpace::H01 => "h01",
            EmbeddingSpace::H1Gamma0 => "h1_gamma0",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AscentOptions {
    pub restarts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop when the tangential Sobolev gradient is this small relative to
    /// the full one.
    pub tol: f64,
}

impl Default for AscentOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            seed: 0,
            max_iter: 20_000,
            tol: 1e-11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: String,
    pub space: Option<EmbeddingSpace>,
    pub n_elem: Option<usize>,
    pub restarts: usize,
    pub converged_restarts: usize,
    pub iterations: Vec<usize>,
    pub restart_values: Vec<f64>,
    pub tol: f64,
    pub seed: Option<u64>,
    pub alpha2_rule: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingEstimate {
    pub value: f64,
    /// Maximizer on the free nodes, normalized to `‖∇u‖₂ = 1`.
    pub maximizer: Vec<f64>,
    pub provenance: Provenance,
}

const ALPHA2_RULE: &str =
    "alpha2 = root > alpha1 of g(l) = l^2/2 - (B^p/p) l^p = E(0), bisection to 1e-12";

struct Space {
    stiffness: SymTridiag,
    /// Free nodes are `1..=n_free` of the full mesh.
    n_free: usize,
    n_nodes: usize,
}

impl Space {
    fn new(mesh: &Mesh1D, space: EmbeddingSpace) -> Result<Self, ThresholdError> {
        let ops = assemble(mesh)?;
        let mut stiffness = ops.stiffness.clone();
        if space == EmbeddingSpace::H01 {
            stiffness.diag.pop();
            stiffness.off.pop();
        }
        Ok(Self {
            n_free: stiffness.dim(),
            stiffness,
            n_nodes: mesh.nodes().len(),
        })
    }

    fn full(&self, u: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_nodes];
        full[1..=self.n_free].copy_from_slice(u);
        full
    }

    fn normalize(&self, u: &mut [f64]) {
        let norm = self.stiffness.form(u, u).sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
    }
}

struct AscentOutcome {
    value_pow: f64,
    u: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Sobolev-gradient projected ascent of `F(u) = ‖u‖_p^p` on the sphere
/// `uᵀKu = 1`, with step doubling on success and halving on failure.
fn ascend(
    space: &Space,
    mesh: &Mesh1D,
    rule: &GaussRule,
    p: f64,
    mut u: Vec<f64>,
    opts: &AscentOptions,
) -> AscentOutcome {
    let objective = |u: &[f64]| lp_norm_pow_full(&space.full(u), p, mesh, rule);
    space.normalize(&mut u);
    let mut value = objective(&u);
    let mut tau = 1.0 / (p * value.max(f64::MIN_POSITIVE));
    for iteration in 0..opts.max_iter {
        let grad_full = source_load_full(&space.full(&u), p, mesh, rule);
        let grad: Vec<f64> = grad_full[1..=space.n_free].iter().map(|g| p * g).collect();
        let Some(sobolev) = space.stiffness.solve(&grad) else {
            break;
        };
        let radial = dot(&grad, &u);
        let tangent: Vec<f64> = sobolev
            .iter()
            .zip(&u)
            .map(|(g, x)| g - radial * x)
            .collect();
        let tangent_norm = space.stiffness.form(&tangent, &tangent).sqrt();
        let full_norm = space.stiffness.form(&sobolev, &sobolev).sqrt();
        if tangent_norm <= opts.tol * full_norm {
            return AscentOutcome {
                value_pow: value,
                u,
                iterations: iteration,
                converged: true,
            };
        }
        loop {
            let mut trial: Vec<f64> = u.iter().zip(&tangent).map(|(x, g)| x + tau * g).collect();
            space.normalize(&mut trial);
            let trial_value = objective(&trial);
            if trial_value >= value {
                u = trial;
                value = trial_value;
                tau = (2.0 * tau).min(1e12);
                break;
            }
            tau *= 0.5;
            if tau * tangent_norm < 1e-18 {
                // No representable ascent step left; stationary to rounding.
                return AscentOutcome {
                    value_pow: value,
                    u,
                    iterations: iteration,
                    converged: true,
                };
            }
        }
    }
    AscentOutcome {
        value_pow: value,
        u,
        iterations: opts.max_iter,
        converged: false,
    }
}

/// Best constant of the discrete embedding into `L^p`, maximized over
/// seeded random restarts. `p = 2` is accepted and yields the Poincaré
/// constant `λ₁^{-1/2}`.
pub fn embedding_constant(
    p: f64,
    mesh: &Mesh1D,
    space: EmbeddingSpace,
    opts: &AscentOptions,
) -> Result<EmbeddingEstimate, ThresholdError> {
    if !(p >= 2.0) || !p.is_finite() {
        return Err(ThresholdError::ExponentTooSmall(p));
    }
    let discrete = Space::new(mesh, space)?;
    // Same rule as the energy channels, so ‖u‖_p ≤ B‖∇u‖₂ holds for them.
    let rule = GaussRule::new(DEFAULT_QUADRATURE_ORDER);
    let outcomes: Vec<AscentOutcome> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(restart as u64));
            let mut walk = 0.0;
            let start: Vec<f64> = (0..discrete.n_free)
                .map(|_| {
                    walk += rng.gen_range(-1.0..1.0);
                    walk
                })
                .collect();
            ascend(&discrete, mesh, &rule, p, start, opts)
        })
        .collect();
    let converged = outcomes.iter().filter(|o| o.converged).count();
    let best = outcomes
        .iter()
        .filter(|o| o.converged)
        .max_by(|a, b| a.value_pow.total_cmp(&b.value_pow))
        .ok_or(ThresholdError::NonConvergence {
            restarts: outcomes.len(),
        })?;
    let provenance = Provenance {
        method: "sobolev-gradient projected ascent on ||grad u||_2 = 1".into(),
        space: Some(space),
        n_elem: Some(mesh.n_elem()),
        restarts: outcomes.len(),
        converged_restarts: converged,
        iterations: outcomes.iter().map(|o| o.iterations).collect(),
        restart_values: outcomes.iter().map(|o| o.value_pow.powf(1.0 / p)).collect(),
        tol: opts.tol,
        seed: Some(opts.seed),
        alpha2_rule: ALPHA2_RULE.into(),
    };
    Ok(EmbeddingEstimate {
        value: best.value_pow.powf(1.0 / p),
        maximizer: best.u.clone(),
        provenance,
    })
}

/// `(α₁, d)` for a given embedding constant.
pub fn well_constants(b: f64, p: f64) -> Result<(f64, f64), ThresholdError> {
    if !(p > 2.0) {
        return Err(ThresholdError::ExponentTooSmall(p));
    }
    if !(b > 0.0) {
        return Err(ThresholdError::NonpositiveConstant(b));
    }
    let alpha1 = b.powf(-p / (p - 2.0));
    let d = (0.5 - 1.0 / p) * alpha1 * alpha1;
    Ok((alpha1, d))
}

/// `g(λ) = λ²/2 - (Bᵖ/p) λᵖ`, the lower bound of the energy at
/// gradient norm λ.
pub fn well_function(lambda: f64, b: f64, p: f64) -> f64 {
    0.5 * lambda * lambda - (b.powf(p) / p) * lambda.powf(p)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alpha2 {
    pub value: f64,
    /// Set when `E(0) = d`, where the root degenerates to `α₁`.
    pub boundary: bool,
}

/// Root `λ ≥ α₁` of `g(λ) = E(0)`.
pub fn alpha2(e0: f64, b: f64, p: f64) -> Result<Alpha2, ThresholdError> {
    let (alpha1, d) = well_constants(b, p)?;
    if (e0 - d).abs() <= 4.0 * f64::EPSILON * d.abs().max(1.0) {
        return Ok(Alpha2 {
            value: alpha1,
            boundary: true,
        });
    }
    if !(e0 < d) {
        return Err(ThresholdError::HypothesisNotMet { e0, d });
    }
    let g = |l: f64| well_function(l, b, p);
    let mut lo = alpha1;
    let mut hi = 2.0 * alpha1;
    while g(hi) > e0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) > e0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Pick the bracket end with the smaller residual.
    let value = if (g(lo) - e0).abs() <= (g(hi) - e0).abs() {
        lo
    } else {
        hi
    };
    Ok(Alpha2 {
        value,
        boundary: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConstants {
    #[serde(rename = "B")]
    pub b: f64,
    pub p: f64,
    pub alpha1: f64,
    pub d: f64,
    pub provenance: Provenance,
}

impl ThresholdConstants {
    pub fn compute(
        p: f64,
        mesh: &Mesh1D,
        space: EmbeddingSpace,
        opts: &AscentOptions,
    ) -> Result<Self, ThresholdError> {
        if !(p > 2.0) {
            return Err(ThresholdError::ExponentTooSmall(p));
        }
        let estimate = embedding_constant(p, mesh, space, opts)?;
        let (alpha1, d) = well_constants(estimate.value, p)?;
        Ok(Self {
            b: estimate.value,
            p,
            alpha1,
            d,
            provenance: estimate.provenance,
        })
    }

    /// Constants for a prescribed `B`, bypassing the maximization.
    pub fn injected(b: f64, p: f64) -> Result<Self, ThresholdError> {
        let (alpha1, d) = well_constants(b, p)?;
        Ok(Self {
            b,
            p,
            alpha1,
            d,
            provenance: Provenance {
                method: "injected".into(),
                space: None,
                n_elem: None,
                restarts: 0,
                converged_restarts: 0,
                iterations: vec![],
                restart_values: vec![],
                tol: 0.0,
                seed: None,
                alpha2_rule: ALPHA2_RULE.into(),
            },
        })
    }

    pub fn alpha2(&self, e0: f64) -> Result<Alpha2, ThresholdError> {
        alpha2(e0, self.b, self.p)
    }

    pub fn space(&self) -> Option<EmbeddingSpace> {
        self.provenance.space
    }
}
