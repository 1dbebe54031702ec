//! Independent reference computations: Gauss–Legendre quadrature of the
//! weighted inner products and dense linear algebra.

use nalgebra::{DMatrix, DVector};

use crate::assembly::{
    assemble_drift, assemble_mass, assemble_stiffness, assemble_weighted_mass, Tridiagonal,
};
use crate::error::{Error, Result};
use crate::mesh::{row_to_node, Mesh};
use crate::model::CoefficientProfile;

/// Largest dense problem the oracle accepts.
pub const MAX_DENSE_DIM: usize = 2000;
pub const DEFAULT_ORDER: usize = 5;

/// Gauss–Legendre rule on the reference element `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    order: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// `order` abscissae; exact for polynomials of degree `2·order − 1`.
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 || order > 64 {
            return Err(Error::param("order", format!("must be in 1..=64, got {order}")));
        }
        let mut points = Vec::with_capacity(order);
        let mut weights = Vec::with_capacity(order);
        let nf = order as f64;
        for k in 0..order {
            // Chebyshev-like initial guess for the k-th root on [-1, 1]
            let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(order, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(order, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            points.push(0.5 * (1.0 - x));
            weights.push(0.5 * w);
        }
        Ok(Self { order, points, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_a^b g`.
    pub fn integrate(&self, a: f64, b: f64, g: impl Fn(f64) -> f64) -> f64 {
        let len = b - a;
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(a + len * x))
            .sum::<f64>()
            * len
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_legendre(DEFAULT_ORDER).expect("valid default order")
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Factor of an inner product: the hat function or its derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Value,
    Slope,
}

/// Hat `φ_i` (or its slope) restricted to element `k = [z_{k−1}, z_k]`.
fn hat_on_element(mesh: &Mesh, i: usize, k: usize, factor: Factor, z: f64) -> f64 {
    let h = mesh.h(k);
    let rising = i == k;
    match (factor, rising) {
        (Factor::Value, true) => (z - mesh.node(k - 1)) / h,
        (Factor::Value, false) => (mesh.node(k) - z) / h,
        (Factor::Slope, true) => 1.0 / h,
        (Factor::Slope, false) => -1.0 / h,
    }
}

/// `∫₀¹ w · a(φ_i) · b(φ_j)` by element-wise quadrature, 1-based indices.
pub fn quad_inner(
    weight: &dyn Fn(f64) -> f64,
    i: usize,
    left: Factor,
    j: usize,
    right: Factor,
    mesh: &Mesh,
    rule: &QuadratureRule,
) -> Result<f64> {
    let n = mesh.len();
    if i == 0 || j == 0 || i > n || j > n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    if rule.order() < 2 {
        return Err(Error::param("order", "quadrature order must be at least 2"));
    }
    let mut total = 0.0;
    // element k spans nodes k−1 and k; φ_i lives on elements i and i+1
    for k in 2..=n {
        let touches = |m: usize| m == k || m + 1 == k;
        if !(touches(i) && touches(j)) {
            continue;
        }
        total += rule.integrate(mesh.node(k - 1), mesh.node(k), |z| {
            weight(z) * hat_on_element(mesh, i, k, left, z) * hat_on_element(mesh, j, k, right, z)
        });
    }
    Ok(total)
}

/// Which matrix [`assemble_reference`] builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// `⟨φ, φ⟩`, the weight is ignored.
    Mass,
    /// `⟨w φ, φ⟩`
    WeightedMass,
    /// `⟨w φ', φ⟩`
    WeightedSlopeValue,
    /// `⟨w φ', φ'⟩`
    WeightedSlopeSlope,
}

impl ReferenceKind {
    fn factors(self) -> (Factor, Factor) {
        match self {
            Self::Mass | Self::WeightedMass => (Factor::Value, Factor::Value),
            Self::WeightedSlopeValue => (Factor::Slope, Factor::Value),
            Self::WeightedSlopeSlope => (Factor::Slope, Factor::Slope),
        }
    }
}

/// Near-exact tridiagonal counterpart of an assembled matrix.
pub fn assemble_reference(
    weight: &dyn Fn(f64) -> f64,
    kind: ReferenceKind,
    mesh: &Mesh,
    rule: &QuadratureRule,
) -> Result<Tridiagonal> {
    let one = |_: f64| 1.0;
    let w: &dyn Fn(f64) -> f64 = if kind == ReferenceKind::Mass { &one } else { weight };
    let (a, b) = kind.factors();
    let dim = mesh.dofs();
    let entry = |r: usize, c: usize| quad_inner(w, row_to_node(r), a, row_to_node(c), b, mesh, rule);
    let mut sub = Vec::with_capacity(dim - 1);
    let mut diag = Vec::with_capacity(dim);
    let mut sup = Vec::with_capacity(dim - 1);
    for r in 0..dim {
        diag.push(entry(r, r)?);
        if r + 1 < dim {
            sup.push(entry(r, r + 1)?);
            sub.push(entry(r + 1, r)?);
        }
    }
    Tridiagonal::new(sub, diag, sup)
}

/// Max entrywise gap between the assembled matrix of `kind` and its
/// quadrature reference. The slope–value kind is compared without the `𝓕`
/// factor, so it covers both `K_f` and `A`.
pub fn mvt_deviation(
    weight: &CoefficientProfile,
    kind: ReferenceKind,
    mesh: &Mesh,
    rule: &QuadratureRule,
) -> Result<f64> {
    let samples = weight.sample(mesh);
    let assembled = match kind {
        ReferenceKind::Mass => assemble_mass(mesh),
        ReferenceKind::WeightedMass => assemble_weighted_mass(mesh, &samples)?,
        ReferenceKind::WeightedSlopeValue => assemble_drift(mesh, &samples)?,
        ReferenceKind::WeightedSlopeSlope => assemble_stiffness(mesh, &samples)?,
    };
    let w = |z: f64| weight.value_at(z);
    assembled.max_abs_diff(&assemble_reference(&w, kind, mesh, rule)?)
}

fn check_dense_dim(n: usize) -> Result<()> {
    if n > MAX_DENSE_DIM {
        return Err(Error::Precondition(format!(
            "dense oracle limited to dimension {MAX_DENSE_DIM}, got {n}"
        )));
    }
    Ok(())
}

pub fn to_dense(m: &Tridiagonal) -> DMatrix<f64> {
    let n = m.dim();
    DMatrix::from_fn(n, n, |i, j| m.get(i, j))
}

pub fn dense_matvec(a: &DMatrix<f64>, x: &[f64]) -> Result<Vec<f64>> {
    if a.ncols() != x.len() {
        return Err(Error::DimensionMismatch { expected: a.ncols(), found: x.len() });
    }
    Ok((a * DVector::from_column_slice(x)).iter().copied().collect())
}

/// Partially pivoted LU solve.
pub fn dense_solve(a: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    if rhs.len() != a.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: rhs.len() });
    }
    check_dense_dim(a.nrows())?;
    let lu = a.clone().lu();
    let u = lu.u();
    if let Some(row) = (0..u.nrows()).find(|&k| u[(k, k)] == 0.0 || !u[(k, k)].is_finite()) {
        return Err(Error::Singular { row, pivot: u[(row, row)] });
    }
    lu.solve(&DVector::from_column_slice(rhs))
        .map(|x| x.iter().copied().collect())
        .ok_or(Error::Singular { row: 0, pivot: 0.0 })
}

/// Smallest eigenvalue of `(A + Aᵀ)/2`.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    check_dense_dim(a.nrows())?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.try_symmetric_eigen(f64::EPSILON, 10_000).ok_or(Error::EigenNonConvergence)?;
    eig.eigenvalues.iter().copied().reduce(f64::min).ok_or(Error::EigenNonConvergence)
}

/// Observed convergence orders `ln(e_k/e_{k+1}) / ln(h_k/h_{k+1})`.
pub fn observed_orders(errors: &[f64], h: &[f64]) -> Vec<f64> {
    errors
        .windows(2)
        .zip(h.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}
