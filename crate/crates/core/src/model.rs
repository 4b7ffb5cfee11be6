//! Continuous problem description: coefficients, hypothesis checks and
//! initial data on the rod Ω = (0, 1) with Γ₀ = {0} (clamped) and
//! Γ₁ = {1} (tip mass).

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discretize::Mesh1D;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown initial-data profile `{0}`")]
    UnknownProfile(String),
    #[error("nodal profile needs matching, strictly increasing nodes on [0, 1]")]
    BadNodalProfile,
}

/// Coefficients of
/// `u_tt - u_xx - α u_txx = |u|^{p-2} u` on (0, 1),
/// `u(0) = 0`,
/// `u_tt(1) = -[u_x(1) + α u_tx(1) + r |u_t(1)|^{m-2} u_t(1)]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub alpha: f64,
    pub r: f64,
    pub p: f64,
    pub m: f64,
    /// Disabling the source turns the model into the damped linear-in-u
    /// problem and drops the potential term from the energy.
    #[serde(default = "default_true")]
    pub source: bool,
    #[serde(default)]
    pub strict_theorem_mode: bool,
}

fn default_true() -> bool {
    true
}

impl ModelParams {
    pub fn new(alpha: f64, r: f64, p: f64, m: f64) -> Self {
        Self {
            alpha,
            r,
            p,
            m,
            source: true,
            strict_theorem_mode: false,
        }
    }

    pub fn without_source(mut self) -> Self {
        self.source = false;
        self
    }
}

/// Critical trace exponent q̄ of `H¹_{Γ₀}(Ω) ↪ L^q(Γ₁)` in dimension `n_dim`.
pub fn critical_trace_exponent(n_dim: u32) -> f64 {
    if n_dim >= 3 {
        let n = n_dim as f64;
        2.0 * (n - 1.0) / (n - 2.0)
    } else {
        f64::INFINITY
    }
}

/// Lower bound `max(2, q̄ / (q̄ + 1 - p))` on m. The quotient is taken in
/// the limit sense when q̄ is infinite, and is infinite when `q̄ + 1 ≤ p`.
pub fn damping_exponent_floor(q_bar: f64, p: f64) -> f64 {
    let quotient = if q_bar.is_infinite() {
        1.0
    } else if q_bar + 1.0 - p <= 0.0 {
        f64::INFINITY
    } else {
        q_bar / (q_bar + 1.0 - p)
    };
    quotient.max(2.0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub passed: bool,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub n_dim: u32,
    /// `f64::INFINITY` for N = 1, 2.
    pub q_bar: f64,
    pub checks: Vec<HypothesisCheck>,
    /// `m < p`, required by the exponential-growth result only.
    pub growth: HypothesisCheck,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn growth_ready(&self) -> bool {
        self.passed() && self.growth.passed
    }

    pub fn failures(&self) -> impl Iterator<Item = &HypothesisCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn first_failure(&self) -> Option<&HypothesisCheck> {
        self.failures().next()
    }
}

fn check(name: &'static str, passed: bool, message: impl Into<String>) -> HypothesisCheck {
    HypothesisCheck {
        name,
        passed,
        message: if passed {
            String::new()
        } else {
            message.into()
        },
    }
}

/// Checks the coefficient hypotheses of the local existence theory.
pub fn validate(params: &ModelParams, n_dim: u32) -> ValidationReport {
    let q_bar = critical_trace_exponent(n_dim);
    let ModelParams { alpha, r, p, m, .. } = *params;
    let mut checks = vec![
        check(
            "p_gt_2",
            p > 2.0 && p.is_finite(),
            "p > 2 required for source nonlinearity",
        ),
        check(
            "m_ge_2",
            m >= 2.0 && m.is_finite(),
            "m >= 2 required for boundary damping",
        ),
        check(
            "alpha_nonneg",
            alpha >= 0.0 && alpha.is_finite(),
            "alpha >= 0 required",
        ),
        check("r_nonneg", r >= 0.0 && r.is_finite(), "r >= 0 required"),
    ];
    if params.strict_theorem_mode {
        checks.push(check(
            "p_range",
            (2.0..=q_bar).contains(&p),
            format!("2 <= p <= q_bar = {q_bar} required"),
        ));
        let floor = damping_exponent_floor(q_bar, p);
        checks.push(check(
            "m_range",
            m >= floor && m <= q_bar,
            format!("max(2, q_bar/(q_bar+1-p)) = {floor} <= m <= q_bar = {q_bar} required"),
        ));
    }
    let growth = check(
        "growth_m_lt_p",
        m < p,
        format!("growth hypothesis m < p fails (m = {m}, p = {p})"),
    );
    ValidationReport {
        n_dim,
        q_bar,
        checks,
        growth,
    }
}

/// Spatial profile used for `u(·, 0)` or `u_t(·, 0)`. Every variant
/// vanishes at x = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Zero,
    /// `x`
    LinearRamp,
    /// `sin(πx/2)`
    SineHalfwave,
    /// `x(2 - x)`
    QuadraticBump,
    Scaled(Box<Profile>, f64),
    /// Piecewise-linear interpolant of nodal values.
    Nodal {
        nodes: Vec<f64>,
        values: Vec<f64>,
    },
}

impl Profile {
    pub fn from_name(name: &str) -> Result<Self, ModelError> {
        match name {
            "zero" => Ok(Profile::Zero),
            "linear_ramp" => Ok(Profile::LinearRamp),
            "sine_halfwave" => Ok(Profile::SineHalfwave),
            "quadratic_bump" => Ok(Profile::QuadraticBump),
            other => Err(ModelError::UnknownProfile(other.to_string())),
        }
    }

    pub fn scaled(self, amplitude: f64) -> Self {
        Profile::Scaled(Box::new(self), amplitude)
    }

    pub fn nodal(nodes: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        let ok = nodes.len() >= 2
            && nodes.len() == values.len()
            && nodes[0] == 0.0
            && *nodes.last().unwrap() == 1.0
            && nodes.windows(2).all(|w| w[1] > w[0]);
        if ok {
            Ok(Profile::Nodal { nodes, values })
        } else {
            Err(ModelError::BadNodalProfile)
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::LinearRamp => x,
            Profile::SineHalfwave => (FRAC_PI_2 * x).sin(),
            Profile::QuadraticBump => x * (2.0 - x),
            Profile::Scaled(inner, a) => a * inner.eval(x),
            Profile::Nodal { nodes, values } => {
                let (e, s) = locate(nodes, x);
                values[e] + s * (values[e + 1] - values[e])
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::LinearRamp => 1.0,
            Profile::SineHalfwave => FRAC_PI_2 * (FRAC_PI_2 * x).cos(),
            Profile::QuadraticBump => 2.0 - 2.0 * x,
            Profile::Scaled(inner, a) => a * inner.deriv(x),
            Profile::Nodal { nodes, values } => {
                let (e, _) = locate(nodes, x);
                (values[e + 1] - values[e]) / (nodes[e + 1] - nodes[e])
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Scaled(inner, a) => *a == 0.0 || inner.is_zero(),
            Profile::Nodal { values, .. } => values.iter().all(|&v| v == 0.0),
            _ => false,
        }
    }

    /// Nodal interpolation on every mesh node, Dirichlet node included.
    pub fn interpolate(&self, mesh: &Mesh1D) -> Vec<f64> {
        let mut values: Vec<f64> = mesh.nodes().iter().map(|&x| self.eval(x)).collect();
        values[0] = 0.0;
        values
    }
}

fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let e = match nodes.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    };
    (e, (x - nodes[e]) / (nodes[e + 1] - nodes[e]))
}

/// Nodal interpolation of a named profile over the full mesh.
pub fn make_initial_data(profile: &Profile, mesh: &Mesh1D) -> Vec<f64> {
    profile.interpolate(mesh)
}

/// Displacement and velocity at t = 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialData {
    pub u0: Profile,
    pub u1: Profile,
}

impl InitialData {
    pub fn new(u0: Profile, u1: Profile) -> Self {
        Self { u0, u1 }
    }

    pub fn at_rest(u0: Profile) -> Self {
        Self {
            u0,
            u1: Profile::Zero,
        }
    }

    pub fn zero() -> Self {
        Self::at_rest(Profile::Zero)
    }
}

/// Ω = (0, 1) with its two boundary parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Domain1D {
    pub length: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

impl Default for Domain1D {
    fn default() -> Self {
        Self {
            length: 1.0,
            gamma0: 0.0,
            gamma1: 1.0,
        }
    }
}
