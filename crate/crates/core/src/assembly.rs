//! Inner products of P1 hat functions and assembly of the discrete system
//!
//! ```text
//! [M_f + T_e Δt C] Λ(t+Δt) = M_f Λ(t) − v1(t) − T_e Δt v3(t)
//! C = 𝓖 M + S(D)/z_F² − (𝓜/z_F) A(D) + (B − K_f)/z_F
//! ```
//!
//! Unweighted products are exact. Weighted products replace the weight on an
//! element by the average of its two end values, so every entry depends on
//! node samples only. Row `r` of every matrix belongs to `φ_{r+2}`, see
//! [`crate::mesh`].

use std::io::{self, Write};

use crate::error::{Error, Result};
use crate::mesh::{row_to_node, Mesh};
use crate::model::{AtmosphereSeries, RescaledContext};
use crate::report::fmt_num;

/// Square tridiagonal matrix stored by bands.
///
/// `sub[k]` is entry `(k+1, k)`, `sup[k]` is entry `(k, k+1)` (0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn new(sub: Vec<f64>, diag: Vec<f64>, sup: Vec<f64>) -> Result<Self> {
        let dim = diag.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, found: 0 });
        }
        for band in [&sub, &sup] {
            if band.len() != dim - 1 {
                return Err(Error::DimensionMismatch { expected: dim - 1, found: band.len() });
            }
        }
        if sub.iter().chain(&diag).chain(&sup).any(|v| !v.is_finite()) {
            return Err(Error::Precondition("tridiagonal entries must be finite".into()));
        }
        Ok(Self { sub, diag, sup })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            sub: vec![0.0; dim.saturating_sub(1)],
            diag: vec![0.0; dim],
            sup: vec![0.0; dim.saturating_sub(1)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.diag.iter_mut().for_each(|d| *d = 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn sub(&self) -> &[f64] {
        &self.sub
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn sup(&self) -> &[f64] {
        &self.sup
    }

    /// Entry `(i, j)`, 0-based; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[i]
        } else if i == j + 1 {
            self.sub[j]
        } else if j == i + 1 {
            self.sup[i]
        } else {
            0.0
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: x.len() });
        }
        Ok((0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.sub[i - 1] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.sup[i] * x[i + 1];
                }
                acc
            })
            .collect())
    }

    pub fn transpose(&self) -> Self {
        Self { sub: self.sup.clone(), diag: self.diag.clone(), sup: self.sub.clone() }
    }

    /// `(A + Aᵀ)/2`
    pub fn symmetric_part(&self) -> Self {
        let off: Vec<f64> = self.sub.iter().zip(&self.sup).map(|(l, u)| 0.5 * (l + u)).collect();
        Self { sub: off.clone(), diag: self.diag.clone(), sup: off }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        self.map(|v| alpha * v)
    }

    fn map(&self, g: impl Fn(f64) -> f64) -> Self {
        Self {
            sub: self.sub.iter().map(|&v| g(v)).collect(),
            diag: self.diag.iter().map(|&v| g(v)).collect(),
            sup: self.sup.iter().map(|&v| g(v)).collect(),
        }
    }

    /// Entrywise `Σ α_k A_k`, summed in the given order.
    pub fn combine(terms: &[(f64, &Tridiagonal)]) -> Result<Self> {
        let dim = terms.first().map(|(_, m)| m.dim()).unwrap_or(0);
        if let Some((_, bad)) = terms.iter().find(|(_, m)| m.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        let mut out = Self::zeros(dim);
        for &(alpha, m) in terms {
            for (o, v) in out.sub.iter_mut().zip(&m.sub) {
                *o += alpha * v;
            }
            for (o, v) in out.diag.iter_mut().zip(&m.diag) {
                *o += alpha * v;
            }
            for (o, v) in out.sup.iter_mut().zip(&m.sup) {
                *o += alpha * v;
            }
        }
        Ok(out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.sub.iter().zip(&self.sup).all(|(l, u)| (l - u).abs() <= tol)
    }

    /// Maximum absolute row sum.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.sub[i - 1].abs();
                }
                if i + 1 < self.dim() {
                    s += self.sup[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Tridiagonal) -> Result<f64> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(self
            .sub
            .iter()
            .zip(&other.sub)
            .chain(self.diag.iter().zip(&other.diag))
            .chain(self.sup.iter().zip(&other.sup))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Band entries as `row,col,value` lines with 1-based indices, row-major.
    pub fn write_band_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "row,col,value")?;
        let n = self.dim();
        for i in 0..n {
            for j in i.saturating_sub(1)..(i + 2).min(n) {
                writeln!(out, "{},{},{}", i + 1, j + 1, fmt_num(self.get(i, j)))?;
            }
        }
        Ok(())
    }
}

/// Unweighted products of hat functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactKind {
    /// `⟨φ_i, φ_j⟩`
    PhiPhi,
    /// `⟨φ'_i, φ_j⟩`
    DphiPhi,
}

/// Weighted products approximated with endpoint-averaged weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightedKind {
    /// `⟨w φ_i, φ_j⟩`
    PhiPhi,
    /// `⟨w φ'_i, φ_j⟩`
    DphiPhi,
    /// `⟨w φ'_i, φ'_j⟩`
    DphiDphi,
}

fn check_indices(i: usize, j: usize, n: usize) -> Result<()> {
    if i == 0 || j == 0 || i > n || j > n {
        return Err(Error::IndexOutOfRange { i, j, n });
    }
    Ok(())
}

/// Exact `⟨φ_i, φ_j⟩` or `⟨φ'_i, φ_j⟩` on `[0, 1]`, 1-based indices.
pub fn exact_inner(i: usize, j: usize, kind: ExactKind, mesh: &Mesh) -> Result<f64> {
    let n = mesh.len();
    check_indices(i, j, n)?;
    let h = |k| mesh.h(k);
    Ok(match kind {
        ExactKind::PhiPhi => {
            if i == j {
                if i == 1 {
                    h(2) / 3.0
                } else if i == n {
                    h(n) / 3.0
                } else {
                    (h(i) + h(i + 1)) / 3.0
                }
            } else if j + 1 == i {
                h(i) / 6.0
            } else if i + 1 == j {
                h(i + 1) / 6.0
            } else {
                0.0
            }
        }
        ExactKind::DphiPhi => {
            if i == j {
                if i == 1 {
                    -0.5
                } else if i == n {
                    0.5
                } else {
                    0.0
                }
            } else if j + 1 == i {
                0.5
            } else if i + 1 == j {
                -0.5
            } else {
                0.0
            }
        }
    })
}

/// Endpoint-average approximation of a weighted product, 1-based indices.
/// `weights` holds the node samples `w(z_1), …, w(z_n)`.
pub fn mvt_inner(i: usize, j: usize, kind: WeightedKind, weights: &[f64], mesh: &Mesh) -> Result<f64> {
    let n = mesh.len();
    check_indices(i, j, n)?;
    if weights.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: weights.len() });
    }
    let w = |k: usize| weights[k - 1];
    let h = |k| mesh.h(k);
    let value = match kind {
        WeightedKind::PhiPhi => {
            if i == j {
                if i == 1 {
                    2.0 * h(2) * (w(1) + w(2)) / 12.0
                } else if i == n {
                    2.0 * h(n) * (w(n) + w(n - 1)) / 12.0
                } else {
                    (2.0 * h(i + 1) * (w(i + 1) + w(i)) + 2.0 * h(i) * (w(i) + w(i - 1))) / 12.0
                }
            } else if j + 1 == i {
                h(i) * (w(i) + w(i - 1)) / 12.0
            } else if i + 1 == j {
                h(i + 1) * (w(i + 1) + w(i)) / 12.0
            } else {
                0.0
            }
        }
        WeightedKind::DphiPhi => {
            let bracket = if i == j {
                if i == 1 {
                    -(w(1) + w(2))
                } else if i == n {
                    w(n - 1) + w(n)
                } else {
                    w(i - 1) - w(i + 1)
                }
            } else if j + 1 == i {
                w(i - 1) + w(i)
            } else if i + 1 == j {
                -(w(i) + w(i + 1))
            } else {
                0.0
            };
            bracket / 4.0
        }
        WeightedKind::DphiDphi => {
            let bracket = if i == j {
                if i == 1 {
                    (w(1) + w(2)) / h(2)
                } else if i == n {
                    (w(n - 1) + w(n)) / h(n)
                } else {
                    (w(i - 1) + w(i)) / h(i) + (w(i) + w(i + 1)) / h(i + 1)
                }
            } else if j + 1 == i {
                -(w(i - 1) + w(i)) / h(i)
            } else if i + 1 == j {
                -(w(i) + w(i + 1)) / h(i + 1)
            } else {
                0.0
            };
            bracket / 2.0
        }
    };
    Ok(value)
}

fn check_samples(mesh: &Mesh, samples: &[f64]) -> Result<()> {
    if samples.len() != mesh.len() {
        return Err(Error::DimensionMismatch { expected: mesh.len(), found: samples.len() });
    }
    Ok(())
}

/// Fills the three bands from closures of the 1-based row index `i`:
/// `diag(i)` for `i = 1..=n−1`, `sub(i)` = entry `(i, i−1)` for `i = 2..=n−1`,
/// `sup(i)` = entry `(i, i+1)` for `i = 1..=n−2`.
fn fill_bands(
    dim: usize,
    diag: impl Fn(usize) -> f64,
    sub: impl Fn(usize) -> f64,
    sup: impl Fn(usize) -> f64,
) -> Tridiagonal {
    Tridiagonal {
        sub: (2..=dim).map(&sub).collect(),
        diag: (1..=dim).map(&diag).collect(),
        sup: (1..dim).map(&sup).collect(),
    }
}

/// Mass matrix `M_ij = ⟨φ_{i+1}, φ_{j+1}⟩`, exact.
pub fn assemble_mass(mesh: &Mesh) -> Tridiagonal {
    let n = mesh.len();
    let h = |k| mesh.h(k);
    fill_bands(
        n - 1,
        |i| if i <= n - 2 { (h(i + 1) + h(i + 2)) / 3.0 } else { h(n) / 3.0 },
        |i| h(i + 1) / 6.0,
        |i| h(i + 2) / 6.0,
    )
}

/// Weighted mass matrix `(M_f)_ij ≈ ⟨φ_{i+1}, φ_{j+1}⟩_f`.
pub fn assemble_weighted_mass(mesh: &Mesh, f: &[f64]) -> Result<Tridiagonal> {
    check_samples(mesh, f)?;
    let n = mesh.len();
    let h = |k| mesh.h(k);
    let w = |k: usize| f[k - 1];
    Ok(fill_bands(
        n - 1,
        |i| {
            if i <= n - 2 {
                (w(i + 2) + w(i + 1)) / 2.0 * h(i + 2) / 3.0 + (w(i + 1) + w(i)) / 2.0 * h(i + 1) / 3.0
            } else {
                (w(n) + w(n - 1)) / 2.0 * h(n) / 3.0
            }
        },
        |i| (w(i + 1) + w(i)) / 2.0 * h(i + 1) / 6.0,
        |i| (w(i + 2) + w(i + 1)) / 2.0 * h(i + 2) / 6.0,
    ))
}

/// The common pattern of `K_f` (without the `𝓕` factor) and `A(D)`:
/// entries `≈ ⟨w φ'_{i+1}, φ_{j+1}⟩`.
fn assemble_slope_value(mesh: &Mesh, w: &[f64]) -> Result<Tridiagonal> {
    check_samples(mesh, w)?;
    let n = mesh.len();
    let w = |k: usize| w[k - 1];
    Ok(fill_bands(
        n - 1,
        |i| if i <= n - 2 { (w(i) - w(i + 2)) / 4.0 } else { (w(n - 1) + w(n)) / 4.0 },
        |i| (w(i) + w(i + 1)) / 4.0,
        |i| -(w(i + 1) + w(i + 2)) / 4.0,
    ))
}

/// Advection matrix `(K_f)_ij ≈ 𝓕 ⟨φ'_{i+1}, φ_{j+1}⟩_f`.
pub fn assemble_advection(mesh: &Mesh, f: &[f64], fcoef: f64) -> Result<Tridiagonal> {
    Ok(assemble_slope_value(mesh, f)?.scaled(fcoef))
}

/// Drift matrix `A(D)_ij ≈ ⟨D φ'_{i+1}, φ_{j+1}⟩`.
pub fn assemble_drift(mesh: &Mesh, d: &[f64]) -> Result<Tridiagonal> {
    assemble_slope_value(mesh, d)
}

/// Stiffness matrix `S(D)_ij ≈ ⟨D φ'_{i+1}, φ'_{j+1}⟩`, built entry by entry
/// from [`mvt_inner`].
pub fn assemble_stiffness(mesh: &Mesh, d: &[f64]) -> Result<Tridiagonal> {
    check_samples(mesh, d)?;
    let dim = mesh.dofs();
    let entry = |r: usize, c: usize| mvt_inner(row_to_node(r), row_to_node(c), WeightedKind::DphiDphi, d, mesh);
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

/// Outflow matrix: zero except `B(n−1, n−1) = 𝓕 f_n`.
pub fn assemble_outflow(mesh: &Mesh, f: &[f64], fcoef: f64) -> Result<Tridiagonal> {
    check_samples(mesh, f)?;
    let mut b = Tridiagonal::zeros(mesh.dofs());
    let last = mesh.dofs() - 1;
    b.diag[last] = fcoef * f[mesh.len() - 1];
    Ok(b)
}

/// The assembled discrete system for one time step length.
#[derive(Debug, Clone)]
pub struct DiscreteSystem {
    pub mesh: Mesh,
    /// Node samples of `f`.
    pub f: Vec<f64>,
    /// Node samples of `D`.
    pub d: Vec<f64>,
    pub context: RescaledContext,
    pub mass: Tridiagonal,
    pub weighted_mass: Tridiagonal,
    pub advection: Tridiagonal,
    pub drift: Tridiagonal,
    pub stiffness: Tridiagonal,
    pub outflow: Tridiagonal,
    /// `C = 𝓖 M + S/z_F² − (𝓜/z_F) A + (B − K_f)/z_F`
    pub operator: Tridiagonal,
    /// `V = M_f + T_e Δt C`
    pub system: Tridiagonal,
    pub dt: f64,
}

pub fn assemble_system(
    mesh: &Mesh,
    f: &[f64],
    d: &[f64],
    context: &RescaledContext,
    dt: f64,
) -> Result<DiscreteSystem> {
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(Error::param("dt", format!("must be finite and >= 0, got {dt}")));
    }
    let ctx = *context;
    let mass = assemble_mass(mesh);
    let weighted_mass = assemble_weighted_mass(mesh, f)?;
    let advection = assemble_advection(mesh, f, ctx.fcoef)?;
    let drift = assemble_drift(mesh, d)?;
    let stiffness = assemble_stiffness(mesh, d)?;
    let outflow = assemble_outflow(mesh, f, ctx.fcoef)?;

    let z = ctx.firn_depth;
    let operator = Tridiagonal::combine(&[
        (ctx.gcoef, &mass),
        (1.0 / (z * z), &stiffness),
        (-ctx.mcoef / z, &drift),
        (1.0 / z, &outflow),
        (-1.0 / z, &advection),
    ])?;
    let system = Tridiagonal::combine(&[(1.0, &weighted_mass), (ctx.final_time * dt, &operator)])?;

    Ok(DiscreteSystem {
        mesh: mesh.clone(),
        f: f.to_vec(),
        d: d.to_vec(),
        context: ctx,
        mass,
        weighted_mass,
        advection,
        drift,
        stiffness,
        outflow,
        operator,
        system,
        dt,
    })
}

impl DiscreteSystem {
    /// Same system with `V` rebuilt for another step length.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(Error::param("dt", format!("must be finite and >= 0, got {dt}")));
        }
        let system = Tridiagonal::combine(&[
            (1.0, &self.weighted_mass),
            (self.context.final_time * dt, &self.operator),
        ])?;
        Ok(Self { system, dt, ..self.clone() })
    }

    pub fn dofs(&self) -> usize {
        self.mesh.dofs()
    }

    pub fn v1(&self, atmosphere: &AtmosphereSeries, t0: f64, t1: f64) -> Result<Vec<f64>> {
        assemble_v1(t0, t1, atmosphere, &self.mesh, &self.f)
    }

    pub fn v3(&self, atmosphere: &AtmosphereSeries, t1: f64) -> Result<Vec<f64>> {
        assemble_v3(t1, atmosphere, &self.mesh, &self.f, &self.d, &self.context)
    }

    pub fn rhs(&self, lambda: &[f64], v1: &[f64], v3: &[f64]) -> Result<Vec<f64>> {
        assemble_rhs(lambda, v1, v3, &self.weighted_mass, self.context.final_time, self.dt)
    }

    /// Named matrices in a fixed order, for reporting and export.
    pub fn matrices(&self) -> [(&'static str, &Tridiagonal); 8] {
        [
            ("M", &self.mass),
            ("M_f", &self.weighted_mass),
            ("K_f", &self.advection),
            ("A", &self.drift),
            ("S", &self.stiffness),
            ("B", &self.outflow),
            ("C", &self.operator),
            ("V", &self.system),
        ]
    }
}

/// `v1 = (ρ_atm(t1) − ρ_atm(t0)) ⟨φ_1, φ_2⟩_f e_1`.
pub fn assemble_v1(
    t0: f64,
    t1: f64,
    atmosphere: &AtmosphereSeries,
    mesh: &Mesh,
    f: &[f64],
) -> Result<Vec<f64>> {
    check_samples(mesh, f)?;
    let jump = atmosphere.eval(t1)? - atmosphere.eval(t0)?;
    let mut v = vec![0.0; mesh.dofs()];
    v[0] = jump * (f[0] + f[1]) * mesh.h(2) / 12.0;
    Ok(v)
}

/// Coupling of the Dirichlet hat `φ_1` with `φ_2` through the operator:
/// `c_1 = 𝓖 h_2/6 − (D_1+D_2)/(2 h_2 z_F²) − 𝓕(f_1+f_2)/(4 z_F) − 𝓜(D_1+D_2)/(4 z_F)`.
pub fn boundary_coupling(mesh: &Mesh, f: &[f64], d: &[f64], ctx: &RescaledContext) -> Result<f64> {
    check_samples(mesh, f)?;
    check_samples(mesh, d)?;
    let h2 = mesh.h(2);
    let z = ctx.firn_depth;
    Ok(ctx.gcoef * h2 / 6.0
        - (d[0] + d[1]) / (2.0 * h2 * z * z)
        - ctx.fcoef * (f[0] + f[1]) / (4.0 * z)
        - ctx.mcoef * (d[0] + d[1]) / (4.0 * z))
}

/// `v3 = ρ_atm(t1) c_1 e_1`.
pub fn assemble_v3(
    t1: f64,
    atmosphere: &AtmosphereSeries,
    mesh: &Mesh,
    f: &[f64],
    d: &[f64],
    ctx: &RescaledContext,
) -> Result<Vec<f64>> {
    let c1 = boundary_coupling(mesh, f, d, ctx)?;
    let mut v = vec![0.0; mesh.dofs()];
    v[0] = atmosphere.eval(t1)? * c1;
    Ok(v)
}

/// `M_f Λ − v1 − T_e Δt v3`, i.e. `M_f Λ − T_e Δt b`.
pub fn assemble_rhs(
    lambda: &[f64],
    v1: &[f64],
    v3: &[f64],
    weighted_mass: &Tridiagonal,
    final_time: f64,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = weighted_mass.dim();
    for v in [v1, v3] {
        if v.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: v.len() });
        }
    }
    let mut rhs = weighted_mass.mul_vec(lambda)?;
    let scale = final_time * dt;
    for ((r, a), c) in rhs.iter_mut().zip(v1).zip(v3) {
        *r = *r - a - scale * c;
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear_samples(mesh: &Mesh) -> Vec<f64> {
        mesh.nodes().iter().map(|z| 1.0 - z).collect()
    }

    fn assert_band(m: &Tridiagonal, expect: &[[f64; 3]], tol: f64) {
        // rows of (sub, diag, sup) with the missing corners ignored
        assert_eq!(m.dim(), expect.len());
        for (i, row) in expect.iter().enumerate() {
            if i > 0 {
                assert!((m.get(i, i - 1) - row[0]).abs() <= tol, "sub {i}: {} vs {}", m.get(i, i - 1), row[0]);
            }
            assert!((m.get(i, i) - row[1]).abs() <= tol, "diag {i}: {} vs {}", m.get(i, i), row[1]);
            if i + 1 < m.dim() {
                assert!((m.get(i, i + 1) - row[2]).abs() <= tol, "sup {i}: {} vs {}", m.get(i, i + 1), row[2]);
            }
        }
    }

    #[test]
    fn tridiagonal_shape_checks() {
        assert!(Tridiagonal::new(vec![1.0], vec![1.0, 2.0], vec![]).is_err());
        assert!(Tridiagonal::new(vec![], vec![f64::NAN], vec![]).is_err());
        let t = Tridiagonal::new(vec![1.0], vec![2.0, 3.0], vec![4.0]).unwrap();
        assert_eq!(t.mul_vec(&[1.0, 1.0]).unwrap(), vec![6.0, 4.0]);
        assert!(t.mul_vec(&[1.0]).is_err());
        assert_eq!(t.transpose().get(0, 1), 1.0);
        assert_eq!(t.symmetric_part().get(1, 0), 2.5);
        assert_eq!(t.inf_norm(), 6.0);
    }

    #[test]
    fn band_csv() {
        let t = Tridiagonal::new(vec![1.0], vec![2.0, 3.0], vec![4.0]).unwrap();
        let mut buf = Vec::new();
        t.write_band_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row,col,value");
        assert_eq!(lines.len(), 5);
        assert!(lines[2].starts_with("1,2,4.0000000000000000e0"), "{}", lines[2]);
    }

    #[test]
    fn exact_products() {
        let mesh = Mesh::graded(vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        assert_relative_eq!(exact_inner(3, 2, ExactKind::PhiPhi, &mesh).unwrap(), 0.3 / 6.0);
        assert_relative_eq!(exact_inner(1, 1, ExactKind::PhiPhi, &mesh).unwrap(), 0.2 / 3.0);
        assert_relative_eq!(exact_inner(2, 2, ExactKind::PhiPhi, &mesh).unwrap(), 0.5 / 3.0);
        assert_eq!(exact_inner(2, 2, ExactKind::DphiPhi, &mesh).unwrap(), 0.0);
        assert_eq!(exact_inner(4, 4, ExactKind::DphiPhi, &mesh).unwrap(), 0.5);
        assert_eq!(exact_inner(1, 1, ExactKind::DphiPhi, &mesh).unwrap(), -0.5);
        assert_eq!(exact_inner(3, 2, ExactKind::DphiPhi, &mesh).unwrap(), 0.5);
        assert_eq!(exact_inner(2, 3, ExactKind::DphiPhi, &mesh).unwrap(), -0.5);
        assert_eq!(exact_inner(1, 3, ExactKind::PhiPhi, &mesh).unwrap(), 0.0);
        assert!(matches!(
            exact_inner(0, 1, ExactKind::PhiPhi, &mesh),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(exact_inner(1, 5, ExactKind::PhiPhi, &mesh).is_err());
    }

    #[test]
    fn weighted_products() {
        let mesh = Mesh::graded(vec![0.0, 0.2, 0.5, 1.0]).unwrap();
        let ones = vec![1.0; 4];
        for i in 1..=4 {
            for j in 1..=4 {
                let exact = exact_inner(i, j, ExactKind::PhiPhi, &mesh).unwrap();
                let mvt = mvt_inner(i, j, WeightedKind::PhiPhi, &ones, &mesh).unwrap();
                assert_relative_eq!(exact, mvt, epsilon = 1e-15);
                let exact = exact_inner(i, j, ExactKind::DphiPhi, &mesh).unwrap();
                let mvt = mvt_inner(i, j, WeightedKind::DphiPhi, &ones, &mesh).unwrap();
                assert_relative_eq!(exact, mvt, epsilon = 1e-15);
            }
        }
        let d = [1.0, 2.0, 3.0, 5.0];
        assert_relative_eq!(mvt_inner(4, 4, WeightedKind::DphiPhi, &d, &mesh).unwrap(), (3.0 + 5.0) / 4.0);
        assert_relative_eq!(
            mvt_inner(2, 3, WeightedKind::DphiDphi, &d, &mesh).unwrap(),
            -(2.0 + 3.0) / (2.0 * 0.3)
        );
        assert_eq!(mvt_inner(1, 3, WeightedKind::DphiDphi, &d, &mesh).unwrap(), 0.0);
        assert!(mvt_inner(1, 1, WeightedKind::PhiPhi, &d[..3], &mesh).is_err());
    }

    #[test]
    fn mass_matrix_uniform() {
        let mesh = Mesh::uniform(4).unwrap();
        let m = assemble_mass(&mesh);
        let o = 1.0 / 18.0;
        assert_band(&m, &[[o, 2.0 / 9.0, o], [o, 2.0 / 9.0, o], [o, 1.0 / 9.0, o]], 1e-15);

        let mesh = Mesh::uniform(9).unwrap();
        let h = 0.125;
        let m = assemble_mass(&mesh);
        for i in 0..8 {
            let d = if i == 7 { 2.0 } else { 4.0 };
            assert_relative_eq!(m.get(i, i), h / 6.0 * d, epsilon = 1e-15);
            if i < 7 {
                assert_relative_eq!(m.get(i, i + 1), h / 6.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn mass_matrix_nonuniform() {
        let mesh = Mesh::graded(vec![0.0, 0.25, 1.0]).unwrap();
        let m = assemble_mass(&mesh);
        // unknowns at z_2 and z_3; the bottom row is h_3/3
        assert_eq!(m.dim(), 2);
        assert_relative_eq!(m.get(1, 1), 0.25, epsilon = 1e-15);
        assert_relative_eq!(m.get(0, 0), 1.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(m.get(0, 1), 0.125, epsilon = 1e-15);
    }

    #[test]
    fn hand_substituted_linear_instance() {
        // n = 3, h = 1/2, f = D = 1 - z  ->  samples (1, 1/2, 0)
        let mesh = Mesh::uniform(3).unwrap();
        let w = linear_samples(&mesh);
        let mf = assemble_weighted_mass(&mesh, &w).unwrap();
        assert_band(&mf, &[[0.0, 1.0 / 6.0, 1.0 / 48.0], [1.0 / 48.0, 1.0 / 24.0, 0.0]], 1e-12);
        let k = assemble_advection(&mesh, &w, 1.0).unwrap();
        assert_band(&k, &[[0.0, 0.25, -0.125], [0.125, 0.125, 0.0]], 1e-12);
        let a = assemble_drift(&mesh, &w).unwrap();
        assert_eq!(a, k);
        let s = assemble_stiffness(&mesh, &w).unwrap();
        assert_band(&s, &[[0.0, 2.0, -0.5], [-0.5, 0.5, 0.0]], 1e-12);
    }

    #[test]
    fn constant_weights_collapse() {
        let mesh = Mesh::graded(vec![0.0, 0.1, 0.35, 0.5, 0.8, 1.0]).unwrap();
        let c = 2.5;
        let w = vec![c; mesh.len()];
        let m = assemble_mass(&mesh);
        let mf = assemble_weighted_mass(&mesh, &w).unwrap();
        assert!(mf.max_abs_diff(&m.scaled(c)).unwrap() <= 1e-15);

        let k = assemble_advection(&mesh, &w, 3.0).unwrap();
        let a = assemble_drift(&mesh, &w).unwrap();
        let dim = mesh.dofs();
        for r in 0..dim {
            for col in r.saturating_sub(1)..(r + 2).min(dim) {
                let exact = exact_inner(row_to_node(r), row_to_node(col), ExactKind::DphiPhi, &mesh).unwrap();
                assert_relative_eq!(k.get(r, col), 3.0 * c * exact, epsilon = 1e-15);
                assert_relative_eq!(a.get(r, col), c * exact, epsilon = 1e-15);
            }
        }
        // constant D: telescoping interior diagonal
        for r in 0..dim - 1 {
            assert_eq!(a.get(r, r), 0.0);
        }
        assert_eq!(a.get(dim - 1, dim - 1), c / 2.0);
    }

    #[test]
    fn stiffness_constant_coefficient() {
        let mesh = Mesh::uniform(4).unwrap();
        let s = assemble_stiffness(&mesh, &[1.0; 4]).unwrap();
        assert_band(&s, &[[0.0, 6.0, -3.0], [-3.0, 6.0, -3.0], [-3.0, 3.0, 0.0]], 1e-12);
    }

    #[test]
    fn stiffness_matches_two_term_split() {
        // S = [D_i/(2h_{i+1}) + D_{i+1}/(2h_{i+2}) …] + [D_{i+1}/(2h_{i+1}) + D_{i+2}/(2h_{i+2}) …]
        let mesh = Mesh::graded(vec![0.0, 0.15, 0.4, 0.45, 0.9, 1.0]).unwrap();
        let d: Vec<f64> = mesh.nodes().iter().map(|z| (1.0 - z) * (2.0 + z)).collect();
        let s = assemble_stiffness(&mesh, &d).unwrap();
        let n = mesh.len();
        let dd = |k: usize| d[k - 1];
        let h = |k| mesh.h(k);
        for i in 1..n {
            let diag = if i <= n - 2 {
                (dd(i) / (2.0 * h(i + 1)) + dd(i + 1) / (2.0 * h(i + 2)))
                    + (dd(i + 1) / (2.0 * h(i + 1)) + dd(i + 2) / (2.0 * h(i + 2)))
            } else {
                dd(n - 1) / (2.0 * h(n)) + dd(n) / (2.0 * h(n))
            };
            assert_relative_eq!(s.get(i - 1, i - 1), diag, max_relative = 1e-14);
            if i <= n - 2 {
                let off = -dd(i + 1) / (2.0 * h(i + 2)) - dd(i + 2) / (2.0 * h(i + 2));
                assert_relative_eq!(s.get(i - 1, i), off, max_relative = 1e-14);
            }
        }
        assert!(s.is_symmetric(0.0));
    }

    #[test]
    fn uniform_displays_agree_with_general_form() {
        let mesh = Mesh::uniform(7).unwrap();
        let h = mesh.uniform_h().unwrap();
        let f: Vec<f64> = mesh.nodes().iter().map(|z| (-z * 1.3f64).exp()).collect();
        let n = mesh.len();
        let ff = |k: usize| f[k - 1];
        let mf = assemble_weighted_mass(&mesh, &f).unwrap();
        let s = assemble_stiffness(&mesh, &f).unwrap();
        for i in 1..n {
            let (dm, ds) = if i <= n - 2 {
                (
                    h / 12.0 * 2.0 * (ff(i) + 2.0 * ff(i + 1) + ff(i + 2)),
                    (ff(i) + 2.0 * ff(i + 1) + ff(i + 2)) / (2.0 * h),
                )
            } else {
                (h / 12.0 * 2.0 * (ff(n - 1) + ff(n)), (ff(n - 1) + ff(n)) / (2.0 * h))
            };
            assert_relative_eq!(mf.get(i - 1, i - 1), dm, max_relative = 1e-13);
            assert_relative_eq!(s.get(i - 1, i - 1), ds, max_relative = 1e-13);
            if i <= n - 2 {
                let zeta = ff(i + 1) + ff(i + 2);
                assert_relative_eq!(mf.get(i - 1, i), h / 12.0 * zeta, max_relative = 1e-13);
                assert_relative_eq!(s.get(i - 1, i), -zeta / (2.0 * h), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn matrices_agree_with_per_entry_products() {
        let mesh = Mesh::graded(vec![0.0, 0.05, 0.3, 0.6, 0.61, 1.0]).unwrap();
        let f: Vec<f64> = mesh.nodes().iter().map(|z| 1.0 - z * z).collect();
        let mf = assemble_weighted_mass(&mesh, &f).unwrap();
        let k = assemble_advection(&mesh, &f, 1.0).unwrap();
        let dim = mesh.dofs();
        for r in 0..dim {
            for c in r.saturating_sub(1)..(r + 2).min(dim) {
                let (i, j) = (row_to_node(r), row_to_node(c));
                let e = mvt_inner(i, j, WeightedKind::PhiPhi, &f, &mesh).unwrap();
                assert_relative_eq!(mf.get(r, c), e, max_relative = 1e-14);
                let e = mvt_inner(i, j, WeightedKind::DphiPhi, &f, &mesh).unwrap();
                assert_relative_eq!(k.get(r, c), e, max_relative = 1e-14, epsilon = 1e-16);
            }
        }
    }

    #[test]
    fn outflow_matrix() {
        let mesh = Mesh::uniform(5).unwrap();
        let mut f = vec![1.0, 0.8, 0.5, 0.3, 0.0];
        assert_eq!(assemble_outflow(&mesh, &f, 2.0).unwrap(), Tridiagonal::zeros(4));
        f[4] = 0.2;
        let b = assemble_outflow(&mesh, &f, 2.0).unwrap();
        assert_relative_eq!(b.get(3, 3), 0.4);
        assert_eq!(b.diag().iter().filter(|v| **v != 0.0).count(), 1);
    }

    #[test]
    fn system_reduces_to_stiffness() {
        let mesh = Mesh::uniform(6).unwrap();
        let f: Vec<f64> = linear_samples(&mesh);
        let d: Vec<f64> = mesh.nodes().iter().map(|z| 2.0 - z).collect();
        let ctx = RescaledContext::unit(0.0, 0.0, 0.0).unwrap();
        let sys = assemble_system(&mesh, &f, &d, &ctx, 0.1).unwrap();
        assert!(sys.operator.max_abs_diff(&sys.stiffness).unwrap() == 0.0);

        let sys = assemble_system(&mesh, &f, &d, &ctx, 0.0).unwrap();
        assert_eq!(sys.system, sys.weighted_mass);
    }

    #[test]
    fn system_entrywise_sum() {
        let mesh = Mesh::uniform(3).unwrap();
        let ones = vec![1.0; 3];
        let ctx = RescaledContext::unit(0.0, 1.0, 1.0).unwrap();
        let dt = 0.01;
        let sys = assemble_system(&mesh, &ones, &ones, &ctx, dt).unwrap();
        // f = D = 1, h = 1/2: M = (1/12)[[4,1],[1,2]], S = [[4,-2],[-2,2]],
        // K = [[0,-1/2],[1/2,1/2]], B = diag(0, 1)
        let c = [[4.0 / 12.0 + 4.0, 1.0 / 12.0 - 2.0 + 0.5], [1.0 / 12.0 - 2.0 - 0.5, 2.0 / 12.0 + 2.0 + 1.0 - 0.5]];
        let mf = [[4.0 / 12.0, 1.0 / 12.0], [1.0 / 12.0, 2.0 / 12.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(sys.operator.get(i, j), c[i][j], epsilon = 1e-14);
                assert_relative_eq!(sys.system.get(i, j), mf[i][j] + dt * c[i][j], epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn system_identity_v_equals_mf_plus_operator() {
        let mesh = Mesh::graded(vec![0.0, 0.1, 0.3, 0.65, 1.0]).unwrap();
        let f: Vec<f64> = mesh.nodes().iter().map(|z| 0.9 - 0.8 * z).collect();
        let d: Vec<f64> = mesh.nodes().iter().map(|z| 3.0 * (1.0 - z)).collect();
        let ctx = RescaledContext::new(40.0, 80.0, 2e-4, 0.8, 0.2).unwrap();
        let sys = assemble_system(&mesh, &f, &d, &ctx, 0.003).unwrap();
        let expect = Tridiagonal::combine(&[(1.0, &sys.weighted_mass), (40.0 * 0.003, &sys.operator)]).unwrap();
        for i in 0..sys.dofs() {
            for j in 0..sys.dofs() {
                let (a, b) = (sys.system.get(i, j), expect.get(i, j));
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
            }
        }
        let nonzero: Vec<_> = (0..sys.dofs()).filter(|&i| sys.outflow.get(i, i) != 0.0).collect();
        assert!(nonzero.is_empty() || nonzero == vec![sys.dofs() - 1]);
        let shorter = sys.with_dt(0.001).unwrap();
        assert_eq!(shorter.dt, 0.001);
        assert_eq!(shorter.operator, sys.operator);
    }

    #[test]
    fn forcing_vectors() {
        let mesh = Mesh::uniform(3).unwrap();
        let ones = vec![1.0; 3];
        let ramp = AtmosphereSeries::Ramp { rate: 1.0 };
        let v1 = assemble_v1(0.0, 1.0, &ramp, &mesh, &ones).unwrap();
        assert_relative_eq!(v1[0], 1.0 / 12.0, epsilon = 1e-15);
        assert_eq!(v1[1], 0.0);
        let flat = AtmosphereSeries::samples(vec![0.0, 0.2, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(assemble_v1(0.4, 0.6, &flat, &mesh, &ones).unwrap(), vec![0.0, 0.0]);

        let mesh = Mesh::uniform(11).unwrap();
        let mut f = vec![0.0; 11];
        f[0] = 1.0;
        f[1] = 0.5;
        let ramp2 = AtmosphereSeries::Ramp { rate: 2.0 };
        let v1 = assemble_v1(0.0, 1.0, &ramp2, &mesh, &f).unwrap();
        assert_relative_eq!(v1[0], 0.025, epsilon = 1e-15);

        let mesh = Mesh::uniform(3).unwrap();
        let unit = AtmosphereSeries::Ramp { rate: 1.0 };
        let ctx = RescaledContext::unit(0.0, 1.0, 1.0).unwrap();
        let v3 = assemble_v3(1.0, &unit, &mesh, &ones, &ones, &ctx).unwrap();
        assert_relative_eq!(v3[0], 1.0 / 12.0 - 2.0 - 0.5, epsilon = 1e-12);
        let ctx = RescaledContext::unit(0.0, 0.0, 0.0).unwrap();
        let v3 = assemble_v3(1.0, &unit, &mesh, &ones, &ones, &ctx).unwrap();
        assert_relative_eq!(v3[0], -2.0, epsilon = 1e-12);
        assert_eq!(assemble_v3(0.0, &unit, &mesh, &ones, &ones, &ctx).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn rhs_expansion() {
        let mf = Tridiagonal::new(vec![0.1, 0.2], vec![1.0, 2.0, 3.0], vec![0.3, 0.4]).unwrap();
        let zero = vec![0.0; 3];
        assert_eq!(assemble_rhs(&zero, &zero, &zero, &mf, 2.0, 0.5).unwrap(), zero);
        let v1 = vec![0.7, 0.0, 0.0];
        let v3 = vec![-1.5, 0.0, 0.0];
        let rhs = assemble_rhs(&zero, &v1, &v3, &mf, 2.0, 0.25).unwrap();
        assert_relative_eq!(rhs[0], -(0.7 + 0.5 * -1.5));
        assert_eq!(&rhs[1..], &[0.0, 0.0]);
        assert!(assemble_rhs(&zero, &v1[..2], &v3, &mf, 1.0, 1.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn mesh_strategy() -> impl Strategy<Value = Mesh> {
            prop::collection::vec(0.05f64..1.0, 2..25).prop_map(|w| {
                let total: f64 = w.iter().sum();
                let mut nodes = vec![0.0];
                let mut acc = 0.0;
                for x in &w[..w.len() - 1] {
                    acc += x / total;
                    nodes.push(acc);
                }
                nodes.push(1.0);
                Mesh::graded(nodes).unwrap()
            })
        }

        proptest! {
            #[test]
            fn symmetry_and_skew_structure(
                mesh in mesh_strategy(),
                seed in prop::collection::vec(0.0f64..3.0, 30),
            ) {
                let w: Vec<f64> = (0..mesh.len()).map(|k| seed[k % seed.len()]).collect();
                let m = assemble_mass(&mesh);
                let mf = assemble_weighted_mass(&mesh, &w).unwrap();
                let s = assemble_stiffness(&mesh, &w).unwrap();
                prop_assert!(m.is_symmetric(0.0));
                prop_assert!(mf.is_symmetric(0.0));
                prop_assert!(s.is_symmetric(0.0));
                for t in [assemble_advection(&mesh, &w, 1.7).unwrap(), assemble_drift(&mesh, &w).unwrap()] {
                    let sum = Tridiagonal::combine(&[(1.0, &t), (1.0, &t.transpose())]).unwrap();
                    prop_assert!(sum.sub().iter().all(|v| *v == 0.0));
                }
            }

            #[test]
            fn weighted_mass_linear_in_weight(
                mesh in mesh_strategy(),
                a in prop::collection::vec(0.0f64..3.0, 30),
                b in prop::collection::vec(0.0f64..3.0, 30),
            ) {
                let f: Vec<f64> = (0..mesh.len()).map(|k| a[k % a.len()]).collect();
                let g: Vec<f64> = (0..mesh.len()).map(|k| b[k % b.len()]).collect();
                let fg: Vec<f64> = f.iter().zip(&g).map(|(x, y)| x + y).collect();
                let lhs = assemble_weighted_mass(&mesh, &fg).unwrap();
                let rhs = Tridiagonal::combine(&[
                    (1.0, &assemble_weighted_mass(&mesh, &f).unwrap()),
                    (1.0, &assemble_weighted_mass(&mesh, &g).unwrap()),
                ]).unwrap();
                prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
            }
        }
    }
}
