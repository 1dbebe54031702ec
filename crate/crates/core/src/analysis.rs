//! Admissibility checks, stability constants and the time-step bound.
//!
//! Integrals of `1/D` run on a uniform grid at least ten times finer than the
//! mesh. When `D(1) = 0` the grid stops at `1 − 10⁻⁸` and gets a geometric
//! tail towards that point; an integral is declared divergent when its value
//! between `1 − 10⁻⁷` and `1 − 10⁻⁸` still grows by more than 1 %.

use crate::assembly::{assemble_system, DiscreteSystem, Tridiagonal};
use crate::error::{Assumption, Error, Result};
use crate::mesh::Mesh;
use crate::model::{CoefficientProfile, RescaledContext};
use crate::oracle::{min_symmetric_eigenvalue, to_dense, MAX_DENSE_DIM};
use crate::report::KeyValueReport;

/// Minimum number of uniform intervals of an integration grid.
pub const MIN_GRID_INTERVALS: usize = 2000;
/// Closest approach to a zero of `D` at the bottom.
pub const TRUNCATION: f64 = 1e-8;
const DIVERGENCE_GROWTH: f64 = 1.01;
const TAIL_STEPS_PER_DECADE: usize = 20;
/// Relative threshold of the positive-definiteness verdict.
pub const PD_RELATIVE_TOLERANCE: f64 = 1e-12;
/// Fraction of `dt_max` used when the step is chosen automatically.
pub const AUTO_DT_SAFETY: f64 = 0.9;

/// Uniform intervals for integrals attached to `mesh`.
pub fn grid_intervals_for(mesh: &Mesh) -> usize {
    (10 * mesh.dofs()).max(MIN_GRID_INTERVALS)
}

/// Quadrature grid on `[0, 1]` or `[0, 1 − 10⁻⁸]`.
#[derive(Debug, Clone)]
struct Grid {
    points: Vec<f64>,
    /// Index of `1 − 10⁻⁷` when the grid is truncated.
    check_index: Option<usize>,
}

impl Grid {
    fn new(intervals: usize, truncated: bool) -> Self {
        let m = intervals.max(1);
        if !truncated {
            let mut points: Vec<f64> = (0..=m).map(|k| k as f64 / m as f64).collect();
            points[m] = 1.0;
            return Self { points, check_index: None };
        }
        let mut points: Vec<f64> = (0..m).map(|k| k as f64 / m as f64).collect();
        let first_gap = 1.0 / m as f64;
        let top = TRUNCATION.log10().abs();
        // distances 10^{-e} for e = top − j/20 with 10^{-e} < 1/m, closest last
        let mut exps: Vec<f64> = (0..)
            .map(|j| top - j as f64 / TAIL_STEPS_PER_DECADE as f64)
            .take_while(|e| 10f64.powf(-e) < first_gap)
            .collect();
        exps.reverse();
        let mut check_index = None;
        for e in exps {
            if (e - (top - 1.0)).abs() < 1e-9 {
                check_index = Some(points.len());
            }
            points.push(1.0 - 10f64.powf(-e));
        }
        Self { points, check_index }
    }

    fn end(&self) -> f64 {
        *self.points.last().unwrap()
    }
}

/// Running trapezoid sums of `g` on the grid, starting from 0.
fn cumulative(grid: &Grid, g: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.points.len());
    out.push(0.0);
    let mut prev = g(grid.points[0]);
    let mut acc = 0.0;
    for w in grid.points.windows(2) {
        let next = g(w[1]);
        acc += 0.5 * (prev + next) * (w[1] - w[0]);
        out.push(acc);
        prev = next;
    }
    out
}

/// `1/w` on the grid, with `w > 0` enforced at every point.
fn reciprocal(w: &CoefficientProfile, grid: &Grid, assumption: Assumption) -> Result<Vec<f64>> {
    let mut vals = Vec::with_capacity(grid.points.len());
    for &z in &grid.points {
        let v = w.value_at(z);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::AssumptionViolated {
                assumption,
                detail: format!("value {v} at z = {z} where a positive value is required"),
            });
        }
        vals.push(1.0 / v);
    }
    Ok(vals)
}

fn cumulative_samples(grid: &Grid, vals: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(vals.len());
    out.push(0.0);
    let mut acc = 0.0;
    for (w, v) in grid.points.windows(2).zip(vals.windows(2)) {
        acc += 0.5 * (v[0] + v[1]) * (w[1] - w[0]);
        out.push(acc);
    }
    out
}

fn degenerate_bottom(w: &CoefficientProfile) -> bool {
    let v = w.value_at(1.0);
    !(v.is_finite() && v > 0.0)
}

fn still_growing(values: &[f64], check: Option<usize>) -> bool {
    match check {
        Some(k) => values[values.len() - 1] > DIVERGENCE_GROWTH * values[k],
        None => false,
    }
}

/// `∫₀¹ 1/D` on the unit interval.
pub fn integral_inverse(d: &CoefficientProfile, intervals: usize) -> Result<f64> {
    let grid = Grid::new(intervals, degenerate_bottom(d));
    let inv = reciprocal(d, &grid, Assumption::DiffusionPositivity)?;
    let cum = cumulative_samples(&grid, &inv);
    if still_growing(&cum, grid.check_index) {
        return Err(Error::DivergentIntegral(format!(
            "∫ 1/D grows from {:.6e} at z = 1 - 1e-7 to {:.6e} at z = 1 - 1e-8",
            cum[grid.check_index.unwrap()],
            cum[cum.len() - 1]
        )));
    }
    Ok(cum[cum.len() - 1])
}

/// Hardy bound `B = sup_z (∫_z^{z_F} v)^{1/2} (∫₀^z 1/w)^{1/2}` for weights
/// given on the unit interval; the result is in physical depth units.
pub fn compute_hardy_b(
    v: &dyn Fn(f64) -> f64,
    w: &CoefficientProfile,
    firn_depth: f64,
    intervals: usize,
) -> Result<f64> {
    let grid = Grid::new(intervals, degenerate_bottom(w));
    let inv = reciprocal(w, &grid, Assumption::PoincareCondition)?;
    let inner = cumulative_samples(&grid, &inv);
    let head = cumulative(&grid, v);
    // ∫_z^1 v, with the piece beyond a truncated end taken as a rectangle
    let total = head[head.len() - 1] + (1.0 - grid.end()) * v(1.0);
    let products: Vec<f64> = inner.iter().zip(&head).map(|(i, h)| (total - h).max(0.0) * i).collect();
    if still_growing(&products, grid.check_index) {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::PoincareCondition,
            detail: "weighted product is unbounded towards z = 1".into(),
        });
    }
    let sup = products.iter().copied().fold(0.0, f64::max);
    if !sup.is_finite() {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::PoincareCondition,
            detail: format!("supremum is {sup}"),
        });
    }
    Ok(firn_depth * sup.sqrt())
}

/// Weighted Poincaré bound `B₀ = sup ((z_F − z) ∫₀^z 1/D)^{1/2}`.
pub fn compute_b0(d: &CoefficientProfile, firn_depth: f64, intervals: usize) -> Result<f64> {
    compute_hardy_b(&|_| 1.0, d, firn_depth, intervals)
}

/// `min f` over a uniform grid on `[0, 1 − h]` that ends exactly at `1 − h`.
pub fn compute_fh(f: &CoefficientProfile, h: f64) -> Result<f64> {
    if !(h > 0.0 && h < 1.0) {
        return Err(Error::param("h", format!("must lie in (0, 1), got {h}")));
    }
    let end = 1.0 - h;
    let m = MIN_GRID_INTERVALS;
    let min = (0..=m)
        .map(|k| if k == m { end } else { end * k as f64 / m as f64 })
        .map(|z| f.value_at(z))
        .fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::PoreFractionPositivity,
            detail: format!("min f on [0, {end}] is {min}"),
        });
    }
    Ok(min)
}

/// Mesh nodes subdivided `per_element` times.
fn refined_points(mesh: &Mesh, per_element: usize) -> Vec<f64> {
    let mut pts = Vec::with_capacity(per_element * mesh.dofs() + 1);
    for w in mesh.nodes().windows(2) {
        for s in 0..per_element {
            pts.push(w[0] + (w[1] - w[0]) * s as f64 / per_element as f64);
        }
    }
    pts.push(1.0);
    pts
}

/// Largest divided difference of `d` on a grid four times finer than the
/// mesh, restricted to `[0, upto]`.
pub fn estimate_lipschitz(d: &CoefficientProfile, mesh: &Mesh, upto: f64) -> f64 {
    let pts: Vec<f64> = refined_points(mesh, 4).into_iter().filter(|&z| z <= upto + 1e-14).collect();
    pts.windows(2)
        .map(|w| ((d.value_at(w[1]) - d.value_at(w[0])) / (w[1] - w[0])).abs())
        .fold(0.0, f64::max)
}

/// `K_G = 1/(2 c_D I(D)) − (𝓜/2) L_δ` with `I(D) = z_F ∫₀¹ 1/D`.
pub fn compute_kg(
    d: &CoefficientProfile,
    context: &RescaledContext,
    c_d: f64,
    l_delta: f64,
    intervals: usize,
) -> Result<f64> {
    check_c_d(c_d)?;
    let i_d = context.firn_depth * integral_inverse(d, intervals)?;
    Ok(kg_formula(i_d, c_d, context.mcoef, l_delta))
}

fn kg_formula(i_d: f64, c_d: f64, mcoef: f64, l_delta: f64) -> f64 {
    1.0 / (2.0 * c_d * i_d) - 0.5 * mcoef * l_delta
}

fn check_c_d(c_d: f64) -> Result<()> {
    if !(c_d > 0.0 && c_d < 2.0) {
        return Err(Error::Precondition(format!("c_D must satisfy 0 < c_D < 2, got {c_d}")));
    }
    Ok(())
}

/// `(z_F / 6 T_e) · min{h/𝓕, f̲_h / (4 |z_F 𝓖 − |K_G||)}`; a vanishing
/// denominator drops the corresponding term.
pub fn compute_dt_max(
    h: f64,
    firn_depth: f64,
    final_time: f64,
    fcoef: f64,
    gcoef: f64,
    f_underbar_h: f64,
    k_g: f64,
) -> Result<f64> {
    for (field, v) in [("h", h), ("firn_depth", firn_depth), ("final_time", final_time), ("f_underbar_h", f_underbar_h)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::param(field, format!("must be finite and > 0, got {v}")));
        }
    }
    if !(fcoef >= 0.0 && gcoef >= 0.0 && k_g.is_finite()) {
        return Err(Error::Precondition("fcoef and gcoef must be >= 0 and K_G finite".into()));
    }
    let advective = if fcoef > 0.0 { h / fcoef } else { f64::INFINITY };
    let gap = (firn_depth * gcoef - k_g.abs()).abs();
    let reactive = if gap > 0.0 { f_underbar_h / (4.0 * gap) } else { f64::INFINITY };
    Ok(firn_depth / (6.0 * final_time) * advective.min(reactive))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdVerdict {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
}

/// Positive definiteness of the symmetric part, decided against
/// `1e-12 · ‖A‖_∞`.
pub fn check_pd(matrix: &Tridiagonal) -> Result<PdVerdict> {
    if matrix.dim() > MAX_DENSE_DIM {
        return Err(Error::Precondition(format!(
            "positive-definiteness check limited to dimension {MAX_DENSE_DIM}"
        )));
    }
    let min = min_symmetric_eigenvalue(&to_dense(matrix))?;
    Ok(PdVerdict { positive_definite: min > PD_RELATIVE_TOLERANCE * matrix.inf_norm(), min_eigenvalue: min })
}

/// Outcome of the node-wise admissibility checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionSummary {
    /// Lipschitz estimate of `D` on the unit interval.
    pub lipschitz: f64,
    /// `max D/f` over nodes with `z < 1`.
    pub ratio_sup_df: f64,
    /// `max f/D` over nodes with `z < 1`.
    pub ratio_sup_fd: f64,
}

pub fn check_assumptions(f: &CoefficientProfile, d: &CoefficientProfile, mesh: &Mesh) -> Result<AssumptionSummary> {
    let fine = refined_points(mesh, 4);
    f.check_nodes(&fine, Assumption::PoreFractionPositivity)?;
    d.check_nodes(&fine, Assumption::DiffusionPositivity)?;
    let lipschitz = estimate_lipschitz(d, mesh, 1.0);
    if !lipschitz.is_finite() {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::DiffusionLipschitz,
            detail: format!("divided differences are unbounded ({lipschitz})"),
        });
    }
    let (ratio_sup_df, ratio_sup_fd) = node_ratios(f, d, mesh);
    if !(ratio_sup_df.is_finite() && ratio_sup_fd.is_finite()) {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::BoundedRatios,
            detail: format!("sup D/f = {ratio_sup_df}, sup f/D = {ratio_sup_fd}"),
        });
    }
    Ok(AssumptionSummary { lipschitz, ratio_sup_df, ratio_sup_fd })
}

fn node_ratios(f: &CoefficientProfile, d: &CoefficientProfile, mesh: &Mesh) -> (f64, f64) {
    let mut df: f64 = 0.0;
    let mut fd: f64 = 0.0;
    for &z in mesh.nodes().iter().filter(|&&z| z < 1.0) {
        let (fv, dv) = (f.value_at(z), d.value_at(z));
        df = df.max(dv / fv);
        fd = fd.max(fv / dv);
    }
    (df, fd)
}

/// Trace constant `C₀`. `lipschitz` and `b0` are in physical units.
///
/// With `D(z_F) ≠ 0`: `‖√(f/D)‖_∞ ‖D‖_∞ ∫₀^{z_F} 1/D`; otherwise
/// `‖√(f/D)‖_∞ L B₀²`.
pub fn compute_c0(
    f: &CoefficientProfile,
    d: &CoefficientProfile,
    mesh: &Mesh,
    firn_depth: f64,
    lipschitz: f64,
    b0: f64,
) -> Result<f64> {
    let (_, fd) = node_ratios(f, d, mesh);
    if !fd.is_finite() {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::BoundedRatios,
            detail: format!("sup f/D = {fd}"),
        });
    }
    let root = fd.sqrt();
    if root == 0.0 {
        return Ok(0.0);
    }
    if degenerate_bottom(d) {
        Ok(root * lipschitz * b0 * b0)
    } else {
        let d_max = mesh.nodes().iter().map(|&z| d.value_at(z)).fold(0.0, f64::max);
        let integral = firn_depth * integral_inverse(d, grid_intervals_for(mesh))?;
        Ok(root * d_max * integral)
    }
}

/// Continuity and Gårding-type constants of the bilinear form. Indicative only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuityConstants {
    pub continuity: f64,
    pub c: f64,
    pub epsilon: f64,
    pub c1: f64,
    pub c2: f64,
}

pub fn continuity_coercivity_constants(
    f: &CoefficientProfile,
    d: &CoefficientProfile,
    mesh: &Mesh,
    context: &RescaledContext,
    b0: f64,
    c0: f64,
) -> Result<ContinuityConstants> {
    let (df, fd) = node_ratios(f, d, mesh);
    if !(df.is_finite() && fd.is_finite()) {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::BoundedRatios,
            detail: format!("sup D/f = {df}, sup f/D = {fd}"),
        });
    }
    let sqrt_d_max = mesh.nodes().iter().map(|&z| d.value_at(z)).fold(0.0, f64::max).sqrt();
    let cp = 2.0 * b0;
    let (m, g, fc) = (context.mcoef, context.gcoef, context.fcoef);
    let continuity = 1.0 + cp * m * sqrt_d_max + g * cp * cp + fc * fd.sqrt() + fc * c0 * c0;
    let c = m * df.sqrt() + fc * fd.sqrt();
    let epsilon = if c > 0.0 { 0.5 * (1.0 / c).min(1.0) } else { 0.5 };
    Ok(ContinuityConstants { continuity, c, epsilon, c1: 1.0 - c * epsilon / 2.0, c2: 1.0 + c / (2.0 * epsilon) })
}

/// The pieces of the time-step bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtBound {
    /// Mesh size entering `h/𝓕` (smallest element).
    pub h: f64,
    /// Excluded bottom layer for `f̲_h` and `L_δ` (last element).
    pub delta: f64,
    pub f_underbar_h: f64,
    pub l_delta: f64,
    /// `z_F ∫₀¹ 1/D`, infinite when divergent.
    pub i_d: f64,
    pub k_g: f64,
    pub dt_max: f64,
}

impl DtBound {
    pub fn i_d_divergent(&self) -> bool {
        self.i_d.is_infinite()
    }
}

/// Computes `dt_max` for a mesh. A divergent `I(D)` is replaced by its limit,
/// which turns `K_G` into `−(𝓜/2) L_δ`.
pub fn stability_bound(
    f: &CoefficientProfile,
    d: &CoefficientProfile,
    mesh: &Mesh,
    context: &RescaledContext,
    c_d: f64,
    delta: Option<f64>,
) -> Result<DtBound> {
    check_c_d(c_d)?;
    let h = mesh.uniform_h().unwrap_or_else(|| mesh.h_min());
    let delta = delta.or(mesh.uniform_h()).unwrap_or_else(|| mesh.h(mesh.len()));
    let f_underbar_h = compute_fh(f, delta)?;
    let l_delta = estimate_lipschitz(d, mesh, 1.0 - delta);
    let i_d = match integral_inverse(d, grid_intervals_for(mesh)) {
        Ok(v) => context.firn_depth * v,
        Err(Error::DivergentIntegral(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let k_g = kg_formula(i_d, c_d, context.mcoef, l_delta);
    let dt_max = compute_dt_max(
        h,
        context.firn_depth,
        context.final_time,
        context.fcoef,
        context.gcoef,
        f_underbar_h,
        k_g,
    )?;
    Ok(DtBound { h, delta, f_underbar_h, l_delta, i_d, k_g, dt_max })
}

/// Everything the `--check-only` report contains.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub nodes: usize,
    pub assumptions: AssumptionSummary,
    pub b0: f64,
    pub c0: f64,
    pub c_d: f64,
    pub bound: DtBound,
    pub continuity: ContinuityConstants,
    /// Step length the verdicts refer to, if any.
    pub dt: Option<f64>,
    pub pd_verdicts: Vec<(&'static str, PdVerdict)>,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    pub fn to_key_values(&self) -> KeyValueReport {
        let mut r = KeyValueReport::new();
        r.comment("firn stability report");
        r.comment("B0, C0 and the continuity constants are indicative estimates, not sharp values");
        for w in &self.warnings {
            r.comment(format!("warning: {w}"));
        }
        r.int("n", self.nodes as i64)
            .num("h", self.bound.h)
            .num("delta", self.bound.delta)
            .num("lipschitz_L", self.assumptions.lipschitz)
            .num("lipschitz_L_delta", self.bound.l_delta)
            .num("ratio_sup_Df", self.assumptions.ratio_sup_df)
            .num("ratio_sup_fD", self.assumptions.ratio_sup_fd)
            .num("B0", self.b0)
            .num("C0", self.c0)
            .num("I_D", self.bound.i_d)
            .flag("I_D_divergent", self.bound.i_d_divergent())
            .num("f_underbar_h", self.bound.f_underbar_h)
            .num("c_D", self.c_d)
            .num("K_G", self.bound.k_g)
            .num("dt_max", self.bound.dt_max)
            .num("continuity_C", self.continuity.continuity)
            .num("coercivity_c", self.continuity.c)
            .num("coercivity_C1", self.continuity.c1)
            .num("coercivity_C2", self.continuity.c2);
        if let Some(dt) = self.dt {
            r.num("dt", dt);
        }
        for (name, v) in &self.pd_verdicts {
            r.flag(format!("pd_{name}"), v.positive_definite);
            r.num(format!("min_eig_{name}"), v.min_eigenvalue);
        }
        r
    }
}

/// Builder for [`StabilityReport`].
#[derive(Debug, Clone)]
pub struct StabilityAnalysis<'a> {
    f: &'a CoefficientProfile,
    d: &'a CoefficientProfile,
    mesh: &'a Mesh,
    context: RescaledContext,
    c_d: f64,
    delta: Option<f64>,
    dt: Option<f64>,
    verdicts: bool,
}

impl<'a> StabilityAnalysis<'a> {
    pub fn new(f: &'a CoefficientProfile, d: &'a CoefficientProfile, mesh: &'a Mesh, context: RescaledContext) -> Self {
        Self { f, d, mesh, context, c_d: 1.0, delta: None, dt: None, verdicts: true }
    }

    pub fn c_d(mut self, c_d: f64) -> Self {
        self.c_d = c_d;
        self
    }

    pub fn delta(mut self, delta: f64) -> Self {
        self.delta = Some(delta);
        self
    }

    /// Step length for the verdict on `V`; defaults to `0.9 · dt_max`.
    pub fn dt(mut self, dt: f64) -> Self {
        self.dt = Some(dt);
        self
    }

    pub fn with_verdicts(mut self, on: bool) -> Self {
        self.verdicts = on;
        self
    }

    pub fn run(self) -> Result<StabilityReport> {
        let assumptions = check_assumptions(self.f, self.d, self.mesh)?;
        let intervals = grid_intervals_for(self.mesh);
        let z_f = self.context.firn_depth;
        let b0 = compute_b0(self.d, z_f, intervals)?;
        let c0 = compute_c0(self.f, self.d, self.mesh, z_f, assumptions.lipschitz / z_f, b0)?;
        let bound = stability_bound(self.f, self.d, self.mesh, &self.context, self.c_d, self.delta)?;
        let continuity = continuity_coercivity_constants(self.f, self.d, self.mesh, &self.context, b0, c0)?;

        let mut warnings = Vec::new();
        if bound.i_d_divergent() {
            warnings.push("integral of 1/D diverges; K_G uses its limit -(M/2) L_delta".to_string());
        }
        let dt = self.dt.unwrap_or(AUTO_DT_SAFETY * bound.dt_max);
        let mut pd_verdicts = Vec::new();
        if self.verdicts && self.mesh.dofs() <= MAX_DENSE_DIM && dt.is_finite() {
            let sys = assemble_system(self.mesh, &self.f.sample(self.mesh), &self.d.sample(self.mesh), &self.context, dt)?;
            pd_verdicts = verdicts(&sys)?;
        } else if self.verdicts {
            warnings.push("positive-definiteness verdicts skipped".to_string());
        }
        Ok(StabilityReport {
            nodes: self.mesh.len(),
            assumptions,
            b0,
            c0,
            c_d: self.c_d,
            bound,
            continuity,
            dt: dt.is_finite().then_some(dt),
            pd_verdicts,
            warnings,
        })
    }
}

/// Verdicts for every matrix of an assembled system.
pub fn verdicts(sys: &DiscreteSystem) -> Result<Vec<(&'static str, PdVerdict)>> {
    sys.matrices().into_iter().map(|(name, m)| Ok((name, check_pd(m)?))).collect()
}
