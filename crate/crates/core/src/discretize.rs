//! P1 finite elements on (0, 1): interior mass, tip-mass point evaluation at
//! x = 1, stiffness, and the two nonlinearities (interior source, tip
//! damping).
//!
//! The clamped node x = 0 is eliminated, so every vector handled by
//! [`AssembledOperators`] has one entry per node `1..=n_elem`; the last entry
//! is the Γ₁ trace.

use thiserror::Error;

use crate::quadrature::GaussRule;

/// Gauss points per element for the non-polynomial integrands.
pub const DEFAULT_QUADRATURE_ORDER: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscretizeError {
    #[error("mesh needs at least 2 elements, got {0}")]
    TooFewElements(usize),
    #[error("mesh must start at 0 and end at 1")]
    BadEndpoints,
    #[error("degenerate element {index}: length {length}")]
    DegenerateElement { index: usize, length: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mesh1D {
    nodes: Vec<f64>,
}

impl Mesh1D {
    pub fn uniform(n_elem: usize) -> Result<Self, DiscretizeError> {
        if n_elem < 2 {
            return Err(DiscretizeError::TooFewElements(n_elem));
        }
        let h = 1.0 / n_elem as f64;
        let mut nodes: Vec<f64> = (0..=n_elem).map(|i| i as f64 * h).collect();
        nodes[n_elem] = 1.0;
        Ok(Self { nodes })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, DiscretizeError> {
        if nodes.len() < 3 {
            return Err(DiscretizeError::TooFewElements(
                nodes.len().saturating_sub(1),
            ));
        }
        if nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(DiscretizeError::BadEndpoints);
        }
        for (index, w) in nodes.windows(2).enumerate() {
            let length = w[1] - w[0];
            if !(length > 0.0) {
                return Err(DiscretizeError::DegenerateElement { index, length });
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn n_elem(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn element(&self, e: usize) -> (f64, f64) {
        (self.nodes[e], self.nodes[e + 1])
    }
}

/// Symmetric tridiagonal matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match i.abs_diff(j) {
            0 => self.diag[i],
            1 => self.off[i.min(j)],
            _ => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i > 0 {
                s += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                s += self.off[i] * x[i + 1];
            }
            y[i] = s;
        }
        y
    }

    /// `xᵀ A y`
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    /// `a·self + b·other`
    pub fn combine(&self, a: f64, other: &SymTridiag, b: f64) -> SymTridiag {
        SymTridiag {
            diag: self
                .diag
                .iter()
                .zip(&other.diag)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            off: self
                .off
                .iter()
                .zip(&other.off)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    /// Thomas algorithm; returns `None` on a zero pivot.
    pub fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let n = self.dim();
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 || !pivot.is_finite() {
            return None;
        }
        c[0] = if n > 1 { self.off[0] / pivot } else { 0.0 };
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.off[i - 1] * c[i - 1];
            if pivot == 0.0 || !pivot.is_finite() {
                return None;
            }
            c[i] = if i + 1 < n { self.off[i] / pivot } else { 0.0 };
            d[i] = (rhs[i] - self.off[i - 1] * d[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            d[i] -= c[i] * d[i + 1];
        }
        Some(d)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `|u|^{e-2} u`, the odd power used by both nonlinearities.
#[inline]
pub fn signed_power(u: f64, exponent: f64) -> f64 {
    u * u.abs().powf(exponent - 2.0)
}

/// Mass and stiffness on every node of the mesh, Dirichlet node included.
pub fn assemble_full(mesh: &Mesh1D) -> (SymTridiag, SymTridiag) {
    let n = mesh.nodes().len();
    let mut mass = SymTridiag::zeros(n);
    let mut stiffness = SymTridiag::zeros(n);
    for e in 0..mesh.n_elem() {
        let (a, b) = mesh.element(e);
        let h = b - a;
        mass.diag[e] += h / 3.0;
        mass.diag[e + 1] += h / 3.0;
        mass.off[e] += h / 6.0;
        stiffness.diag[e] += 1.0 / h;
        stiffness.diag[e + 1] += 1.0 / h;
        stiffness.off[e] -= 1.0 / h;
    }
    (mass, stiffness)
}

/// Galerkin operators with the x = 0 degree of freedom eliminated.
#[derive(Clone, Debug)]
pub struct AssembledOperators {
    mesh: Mesh1D,
    /// Interior mass `∫ φᵢ φⱼ`.
    pub mass: SymTridiag,
    /// Stiffness `∫ φᵢ' φⱼ'`.
    pub stiffness: SymTridiag,
    quadrature: GaussRule,
}

pub fn assemble(mesh: &Mesh1D) -> Result<AssembledOperators, DiscretizeError> {
    assemble_with_order(mesh, DEFAULT_QUADRATURE_ORDER)
}

pub fn assemble_with_order(
    mesh: &Mesh1D,
    quadrature_order: usize,
) -> Result<AssembledOperators, DiscretizeError> {
    // Re-validate: a mesh built through `from_nodes` is already checked, but
    // this keeps `assemble` total over any node list.
    let mesh = Mesh1D::from_nodes(mesh.nodes().to_vec())?;
    let (mass, stiffness) = assemble_full(&mesh);
    let reduce = |a: SymTridiag| SymTridiag {
        diag: a.diag[1..].to_vec(),
        off: a.off[1..].to_vec(),
    };
    Ok(AssembledOperators {
        mass: reduce(mass),
        stiffness: reduce(stiffness),
        quadrature: GaussRule::new(quadrature_order.max(1)),
        mesh,
    })
}

impl AssembledOperators {
    /// Hand-built system for scalar checks; the source load is meaningless
    /// on it.
    #[cfg(test)]
    pub(crate) fn from_matrices(mass: SymTridiag, stiffness: SymTridiag) -> Self {
        let n = mass.dim().max(2);
        Self {
            mesh: Mesh1D::uniform(n).unwrap(),
            mass,
            stiffness,
            quadrature: GaussRule::new(DEFAULT_QUADRATURE_ORDER),
        }
    }

    pub fn mesh(&self) -> &Mesh1D {
        &self.mesh
    }

    pub fn n_dof(&self) -> usize {
        self.mass.dim()
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature.len()
    }

    /// Index of the Γ₁ node in reduced vectors.
    pub fn boundary_dof(&self) -> usize {
        self.n_dof() - 1
    }

    /// Boundary mass `Bg`: a single unit entry at the Γ₁ node.
    pub fn boundary_mass(&self) -> SymTridiag {
        let mut bg = SymTridiag::zeros(self.n_dof());
        let k = self.boundary_dof();
        bg.diag[k] = 1.0;
        bg
    }

    /// `M + Bg`, the inertia of interior plus tip mass.
    pub fn inertia(&self) -> SymTridiag {
        let mut a = self.mass.clone();
        let k = self.boundary_dof();
        a.diag[k] += 1.0;
        a
    }

    /// Prepends the clamped value 0.
    pub fn expand(&self, reduced: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(reduced.len() + 1);
        full.push(0.0);
        full.extend_from_slice(reduced);
        full
    }

    /// Drops the clamped node.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full[1..].to_vec()
    }

    /// Source load `∫ |u_h|^{p-2} u_h φⱼ` on the free nodes.
    pub fn source_load(&self, u: &[f64], p: f64) -> Vec<f64> {
        let full = source_load_full(&self.expand(u), p, &self.mesh, &self.quadrature);
        full[1..].to_vec()
    }

    /// Derivative of [`Self::source_load`]: `∫ (p-1)|u_h|^{p-2} φᵢ φⱼ`.
    pub fn source_jacobian(&self, u: &[f64], p: f64) -> SymTridiag {
        let full = self.expand(u);
        let mut jac = SymTridiag::zeros(full.len());
        for e in 0..self.mesh.n_elem() {
            let (a, b) = self.mesh.element(e);
            let (ua, ub) = (full[e], full[e + 1]);
            for (x, w) in self.quadrature.mapped(a, b) {
                let s = (x - a) / (b - a);
                let uh = ua * (1.0 - s) + ub * s;
                let k = w * (p - 1.0) * uh.abs().powf(p - 2.0);
                jac.diag[e] += k * (1.0 - s) * (1.0 - s);
                jac.diag[e + 1] += k * s * s;
                jac.off[e] += k * s * (1.0 - s);
            }
        }
        SymTridiag {
            diag: jac.diag[1..].to_vec(),
            off: jac.off[1..].to_vec(),
        }
    }

    /// `‖u_h‖_p^p` with the same quadrature as the source load.
    pub fn lp_norm_pow(&self, u: &[f64], p: f64) -> f64 {
        lp_norm_pow_full(&self.expand(u), p, &self.mesh, &self.quadrature)
    }

    pub fn l2_norm_sq(&self, u: &[f64]) -> f64 {
        self.mass.form(u, u)
    }

    pub fn h1_seminorm_sq(&self, u: &[f64]) -> f64 {
        self.stiffness.form(u, u)
    }

    pub fn trace(&self, u: &[f64]) -> f64 {
        u[self.boundary_dof()]
    }
}

/// Source load on every node of `mesh` (no boundary condition applied).
pub fn source_load_full(u: &[f64], p: f64, mesh: &Mesh1D, rule: &GaussRule) -> Vec<f64> {
    let mut load = vec![0.0; u.len()];
    for e in 0..mesh.n_elem() {
        let (a, b) = mesh.element(e);
        let (ua, ub) = (u[e], u[e + 1]);
        if ua == 0.0 && ub == 0.0 {
            continue;
        }
        for (x, w) in rule.mapped(a, b) {
            let s = (x - a) / (b - a);
            let f = w * signed_power(ua * (1.0 - s) + ub * s, p);
            load[e] += f * (1.0 - s);
            load[e + 1] += f * s;
        }
    }
    load
}

pub fn lp_norm_pow_full(u: &[f64], p: f64, mesh: &Mesh1D, rule: &GaussRule) -> f64 {
    let mut total = 0.0;
    for e in 0..mesh.n_elem() {
        let (a, b) = mesh.element(e);
        let (ua, ub) = (u[e], u[e + 1]);
        for (x, w) in rule.mapped(a, b) {
            let s = (x - a) / (b - a);
            total += w * (ua * (1.0 - s) + ub * s).abs().powf(p);
        }
    }
    total
}

/// Tip damping force `r |v|^{m-2} v`.
pub fn boundary_damping(v_gamma1: f64, r: f64, m: f64) -> f64 {
    r * signed_power(v_gamma1, m)
}

/// `r (m-1) (v² + η²)^{(m-2)/2}`, the Newton slope of the tip damping.
/// The regularizer only enters here, never the residual.
pub fn boundary_damping_jacobian(v_gamma1: f64, r: f64, m: f64, eta: f64) -> f64 {
    r * (m - 1.0) * (v_gamma1 * v_gamma1 + eta * eta).powf(0.5 * (m - 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn two_element_matrices() {
        let mesh = Mesh1D::uniform(2).unwrap();
        let (mass, stiffness) = assemble_full(&mesh);
        let k = [[2.0, -2.0, 0.0], [-2.0, 4.0, -2.0], [0.0, -2.0, 2.0]];
        let m = [[2.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 2.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(close(stiffness.get(i, j), k[i][j], 1e-14));
                assert!(close(mass.get(i, j), m[i][j] / 12.0, 1e-15));
            }
        }
    }

    #[test]
    fn boundary_mass_is_single_unit_entry() {
        let ops = assemble(&Mesh1D::uniform(5).unwrap()).unwrap();
        let bg = ops.boundary_mass();
        let nonzero: Vec<_> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|&(i, j)| bg.get(i, j) != 0.0)
            .collect();
        assert_eq!(nonzero, vec![(4, 4)]);
        assert_eq!(bg.get(4, 4), 1.0);
    }

    #[test]
    fn reduced_stiffness_is_positive_definite() {
        let ops = assemble(&Mesh1D::uniform(16).unwrap()).unwrap();
        // Positive pivots in the Thomas elimination ⇔ SPD for tridiagonals.
        let n = ops.n_dof();
        let mut pivot = ops.stiffness.diag[0];
        assert!(pivot > 0.0);
        for i in 1..n {
            pivot = ops.stiffness.diag[i] - ops.stiffness.off[i - 1].powi(2) / pivot;
            assert!(pivot > 0.0);
        }
    }

    #[test]
    fn degenerate_meshes_rejected() {
        assert_eq!(Mesh1D::uniform(1), Err(DiscretizeError::TooFewElements(1)));
        assert!(matches!(
            Mesh1D::from_nodes(vec![0.0, 0.5, 0.5, 1.0]),
            Err(DiscretizeError::DegenerateElement { index: 1, .. })
        ));
        assert_eq!(
            Mesh1D::from_nodes(vec![0.0, 0.5, 0.9]),
            Err(DiscretizeError::BadEndpoints)
        );
    }

    #[test]
    fn source_load_of_zero_is_zero() {
        let ops = assemble(&Mesh1D::uniform(8).unwrap()).unwrap();
        assert!(ops.source_load(&[0.0; 8], 4.0).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn source_load_of_one_is_mass_row_sums() {
        let mesh = Mesh1D::uniform(6).unwrap();
        let (mass, _) = assemble_full(&mesh);
        let ones = vec![1.0; 7];
        let load = source_load_full(&ones, 4.0, &mesh, &GaussRule::new(4));
        let sums = mass.matvec(&ones);
        for (a, b) in load.iter().zip(&sums) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn scalar_damping_values() {
        assert_eq!(boundary_damping(2.0, 1.0, 2.0), 2.0);
        assert_eq!(boundary_damping(2.0, 1.0, 4.0), 8.0);
        assert_eq!(boundary_damping(-2.0, 1.0, 4.0), -8.0);
        assert_eq!(boundary_damping(0.0, 1.0, 2.5), 0.0);
    }

    #[test]
    fn damping_jacobian_values() {
        assert_eq!(boundary_damping_jacobian(0.0, 1.0, 2.0, 0.0), 1.0);
        assert!(close(
            boundary_damping_jacobian(2.0, 1.0, 4.0, 0.0),
            12.0,
            1e-14
        ));
        assert_eq!(boundary_damping_jacobian(0.0, 1.0, 2.5, 0.0), 0.0);
    }

    #[test]
    fn thomas_solver_inverts() {
        let ops = assemble(&Mesh1D::uniform(10).unwrap()).unwrap();
        let a = ops.inertia().combine(1.0, &ops.stiffness, 0.3);
        let x: Vec<f64> = (0..10).map(|i| (i as f64 * 0.7).sin()).collect();
        let b = a.matvec(&x);
        let y = a.solve(&b).unwrap();
        for (p, q) in x.iter().zip(&y) {
            assert!(close(*p, *q, 1e-13));
        }
    }
}
