//! Numerical laboratory for the semilinear wave equation with Kelvin–Voigt
//! damping and a dynamic (tip-mass) boundary condition on the rod (0, 1):
//!
//! ```text
//! u_tt − u_xx − α u_txx = |u|^{p−2} u            in (0, 1)
//! u(0, t) = 0
//! u_tt(1, t) = −[u_x + α u_tx + r |u_t|^{m−2} u_t](1, t)
//! ```
//!
//! The crate provides a P1 finite-element / implicit-midpoint solver, the
//! energy and potential-well diagnostics of the growth regime, the
//! embedding-constant thresholds, and two independent cross-checks: a
//! Faedo–Galerkin spectral solver and the Picard (frozen-source) iteration.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod discretize;
pub mod harness;
pub mod integrate;
pub mod io;
pub mod model;
pub mod ode;
pub mod picard;
pub mod quadrature;
pub mod spectral;
pub mod thresholds;

pub use config::RunConfig;
pub use diagnostics::{energy, EnergyReport};
pub use discretize::{assemble, AssembledOperators, Mesh1D};
pub use integrate::{run, step, State, StepControl, Termination, Trajectory};
pub use model::{validate, InitialData, ModelParams, Profile};
pub use thresholds::{EmbeddingSpace, ThresholdConstants};
