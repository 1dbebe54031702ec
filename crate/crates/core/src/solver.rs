//! Implicit Euler time loop and the tridiagonal solve.

use std::io::{self, Write};

use crate::analysis::{check_assumptions, stability_bound, DtBound, AUTO_DT_SAFETY};
use crate::assembly::{assemble_system, DiscreteSystem, Tridiagonal};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::model::{AtmosphereSeries, CoefficientProfile, RescaledContext};
use crate::report::fmt_num;

/// Pivots below this fraction of `‖A‖_∞` send the Thomas sweep to the
/// pivoted fallback.
const THOMAS_GUARD: f64 = 1e-12;
/// Pivots below this fraction of `‖A‖_∞` make the pivoted elimination give up.
const SINGULAR_GUARD: f64 = 1e-15;
const STEP_TOLERANCE: f64 = 1e-9;

/// Solves `A x = rhs`: Thomas algorithm first, partially pivoted banded
/// elimination when a pivot is too small.
pub fn solve_tridiagonal(matrix: &Tridiagonal, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = matrix.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rhs.len() });
    }
    let norm = matrix.inf_norm();
    match thomas(matrix, rhs, THOMAS_GUARD * norm) {
        Some(x) => Ok(x),
        None => pivoted(matrix, rhs, SINGULAR_GUARD * norm),
    }
}

fn thomas(m: &Tridiagonal, rhs: &[f64], guard: f64) -> Option<Vec<f64>> {
    let n = m.dim();
    let (a, b, c) = (m.sub(), m.diag(), m.sup());
    let mut cp = vec![0.0; n];
    let mut x = rhs.to_vec();
    let mut pivot = b[0];
    for i in 0..n {
        if i > 0 {
            pivot = b[i] - a[i - 1] * cp[i - 1];
            x[i] -= a[i - 1] * x[i - 1];
        }
        if !(pivot.abs() > guard && pivot.is_finite()) {
            return None;
        }
        if i + 1 < n {
            cp[i] = c[i] / pivot;
        }
        x[i] /= pivot;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        x[i] -= cp[i] * x[i + 1];
    }
    Some(x)
}

/// Gaussian elimination with row interchanges; fill-in creates a second
/// upper band.
fn pivoted(m: &Tridiagonal, rhs: &[f64], guard: f64) -> Result<Vec<f64>> {
    let n = m.dim();
    let mut dl = m.sub().to_vec();
    let mut d = m.diag().to_vec();
    let mut du = m.sup().to_vec();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    let mut x = rhs.to_vec();
    let singular =
        |row: usize, pivot: f64| (!(pivot.abs() > guard && pivot.is_finite())).then_some(Error::Singular { row, pivot });
    for i in 0..n.saturating_sub(1) {
        if d[i].abs() >= dl[i].abs() {
            if let Some(e) = singular(i, d[i]) {
                return Err(e);
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            x[i + 1] -= fact * x[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] *= -fact;
            }
            du[i] = temp;
            x.swap(i, i + 1);
            x[i + 1] -= fact * x[i];
        }
        dl[i] = 0.0;
    }
    if let Some(e) = singular(n - 1, d[n - 1]) {
        return Err(e);
    }
    x[n - 1] /= d[n - 1];
    if n >= 2 {
        x[n - 2] = (x[n - 2] - du[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (x[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / d[i];
    }
    Ok(x)
}

/// One implicit Euler step from `t0` to `t1`.
pub fn step(
    system: &DiscreteSystem,
    lambda: &[f64],
    atmosphere: &AtmosphereSeries,
    t0: f64,
    t1: f64,
) -> Result<Vec<f64>> {
    let dt = t1 - t0;
    if (dt - system.dt).abs() > STEP_TOLERANCE * system.dt.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::TimeStepMismatch { expected: system.dt, found: dt });
    }
    let v1 = system.v1(atmosphere, t0, t1)?;
    let v3 = system.v3(atmosphere, t1)?;
    let rhs = system.rhs(lambda, &v1, &v3)?;
    solve_tridiagonal(&system.system, &rhs)
}

/// `t_k = k Δt` for `k < K` and `t_K = 1`, with `K = ⌈1/Δt⌉`.
pub fn time_grid(dt: f64) -> Result<Vec<f64>> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", format!("must be finite and > 0, got {dt}")));
    }
    let ratio = 1.0 / dt;
    let nearest = ratio.round();
    let steps = if (ratio - nearest).abs() <= STEP_TOLERANCE * ratio { nearest } else { ratio.ceil() };
    let steps = (steps as usize).max(1);
    let mut times: Vec<f64> = (0..steps).map(|k| k as f64 * dt).collect();
    times.push(1.0);
    Ok(times)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    Fixed(f64),
    /// `0.9 · dt_max`
    Auto,
}

#[derive(Debug, Clone)]
pub struct SimulationSetup {
    pub mesh: Mesh,
    pub f: CoefficientProfile,
    pub d: CoefficientProfile,
    pub context: RescaledContext,
    pub atmosphere: AtmosphereSeries,
    pub time_step: TimeStep,
    /// Run even when an admissibility check fails.
    pub force: bool,
    pub c_d: f64,
}

impl SimulationSetup {
    pub fn new(
        mesh: Mesh,
        f: CoefficientProfile,
        d: CoefficientProfile,
        context: RescaledContext,
        atmosphere: AtmosphereSeries,
    ) -> Self {
        Self { mesh, f, d, context, atmosphere, time_step: TimeStep::Auto, force: false, c_d: 1.0 }
    }

    pub fn time_step(mut self, time_step: TimeStep) -> Self {
        self.time_step = time_step;
        self
    }

    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn c_d(mut self, c_d: f64) -> Self {
        self.c_d = c_d;
        self
    }
}

/// Discrete solution at every time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `Λ(t_k)`, the values at `z_2, …, z_n`.
    pub interior: Vec<Vec<f64>>,
    /// `ρ_atm(t_k)`
    pub boundary: Vec<f64>,
    pub mesh: Mesh,
    pub dt: f64,
    /// Bound computed for the run, absent when it could not be evaluated.
    pub bound: Option<DtBound>,
}

/// Runs the scheme from `Λ(0) = 0` to `t = 1`.
pub fn run(setup: &SimulationSetup) -> Result<Trajectory> {
    setup.atmosphere.validate()?;
    let mesh = &setup.mesh;
    let admissible = check_assumptions(&setup.f, &setup.d, mesh).map(|_| ());
    if let Err(e) = admissible {
        if !setup.force {
            return Err(e);
        }
    }
    let bound = match stability_bound(&setup.f, &setup.d, mesh, &setup.context, setup.c_d, None) {
        Ok(b) => Some(b),
        Err(e) if !setup.force || setup.time_step == TimeStep::Auto => return Err(e),
        Err(_) => None,
    };
    let dt = match (setup.time_step, bound) {
        (TimeStep::Auto, Some(b)) => (AUTO_DT_SAFETY * b.dt_max).min(1.0),
        (TimeStep::Auto, None) => unreachable!("auto step requires a bound"),
        (TimeStep::Fixed(dt), b) => {
            if let Some(b) = b {
                if dt >= b.dt_max && !setup.force {
                    return Err(Error::TimeStepTooLarge { dt, dt_max: b.dt_max });
                }
            }
            dt
        }
    };
    let times = time_grid(dt)?;
    let f = setup.f.sample(mesh);
    let d = setup.d.sample(mesh);
    let system = assemble_system(mesh, &f, &d, &setup.context, dt)?;
    let mut interior = Vec::with_capacity(times.len());
    interior.push(vec![0.0; mesh.dofs()]);
    let mut last_system: Option<DiscreteSystem> = None;
    for w in times.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let h = t1 - t0;
        let sys = if (h - dt).abs() <= STEP_TOLERANCE * dt {
            &system
        } else {
            last_system.insert(system.with_dt(h)?)
        };
        let next = step(sys, interior.last().unwrap(), &setup.atmosphere, t0, t1)?;
        interior.push(next);
    }
    let boundary = times.iter().map(|&t| setup.atmosphere.eval(t)).collect::<Result<Vec<_>>>()?;
    Ok(Trajectory { times, interior, boundary, mesh: mesh.clone(), dt, bound })
}

impl Trajectory {
    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// `[ρ_atm(t_k), Λ(t_k)…]`
    pub fn reconstruct_full(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.times.len() {
            return Err(Error::IndexOutOfRange { i: k, j: 0, n: self.steps() });
        }
        let mut full = Vec::with_capacity(self.mesh.len());
        full.push(self.boundary[k]);
        full.extend_from_slice(&self.interior[k]);
        Ok(full)
    }

    /// Header of node coordinates, then `t, ρ(z_1), …, ρ(z_n)` for every
    /// `stride`-th level and the final one.
    pub fn write_csv<W: Write>(&self, mut out: W, stride: usize) -> io::Result<()> {
        let stride = stride.max(1);
        write!(out, "t")?;
        for z in self.mesh.nodes() {
            write!(out, ",{}", fmt_num(*z))?;
        }
        writeln!(out)?;
        let last = self.steps();
        for k in (0..=last).filter(|k| k % stride == 0 || *k == last) {
            write!(out, "{}", fmt_num(self.times[k]))?;
            write!(out, ",{}", fmt_num(self.boundary[k]))?;
            for v in &self.interior[k] {
                write!(out, ",{}", fmt_num(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{dense_matvec, dense_solve, to_dense};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_systems() {
        let id = Tridiagonal::identity(3);
        assert_eq!(solve_tridiagonal(&id, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let a = Tridiagonal::new(vec![1.0], vec![2.0, 2.0], vec![1.0]).unwrap();
        let x = solve_tridiagonal(&a, &[3.0, 3.0]).unwrap();
        assert_relative_eq!(x[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 1.0, epsilon = 1e-15);
        assert!(solve_tridiagonal(&a, &[1.0]).is_err());
    }

    #[test]
    fn zero_leading_pivot_uses_fallback() {
        let a = Tridiagonal::new(vec![1.0, 1.0], vec![0.0, 0.0, 1.0], vec![1.0, 2.0]).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = solve_tridiagonal(&a, &b).unwrap();
        let r = a.mul_vec(&x).unwrap();
        for (ri, bi) in r.iter().zip(&b) {
            assert_relative_eq!(ri, bi, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_reports_row() {
        let a = Tridiagonal::new(vec![1.0], vec![1.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(solve_tridiagonal(&a, &[1.0, 1.0]), Err(Error::Singular { row: 1, .. })));
    }

    #[test]
    fn random_dominant_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(2..60);
            let sub: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let sup: Vec<f64> = (0..n - 1).map(|_| rng.random_range(-1.0..1.0)).collect();
            let diag: Vec<f64> = (0..n).map(|_| rng.random_range(2.5..4.0)).collect();
            let a = Tridiagonal::new(sub, diag, sup).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x = solve_tridiagonal(&a, &b).unwrap();
            let r = dense_matvec(&to_dense(&a), &x).unwrap();
            let bn = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let res = r.iter().zip(&b).fold(0.0f64, |m, (ri, bi)| m.max((ri - bi).abs()));
            assert!(res <= 1e-10 * bn);
            let y = dense_solve(&to_dense(&a), &b).unwrap();
            let diff = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(diff <= 1e-10);
            let xp = pivoted(&a, &b, 0.0).unwrap();
            let diff = x.iter().zip(&xp).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
            assert!(diff <= 1e-12);
        }
    }

    #[test]
    fn pivoted_general_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(2..30);
            let mut gen = |len| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
            let a = Tridiagonal::new(gen(n - 1), gen(n), gen(n - 1)).unwrap();
            let b = gen(n);
            let dense = to_dense(&a);
            if let (Ok(x), Ok(y)) = (pivoted(&a, &b, 1e-15 * a.inf_norm()), dense_solve(&dense, &b)) {
                let scale = y.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let diff = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
                assert!(diff <= 1e-8 * scale, "diff {diff} scale {scale}");
            }
        }
    }

    #[test]
    fn grid_lands_on_one() {
        assert_eq!(time_grid(0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = time_grid(0.1).unwrap();
        assert_eq!(g.len(), 11);
        let g = time_grid(0.3).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_relative_eq!(g[4] - g[3], 0.1, epsilon = 1e-15);
        assert!(time_grid(0.0).is_err());
    }

    fn unit_setup(n: usize, atm: AtmosphereSeries, dt: f64) -> SimulationSetup {
        SimulationSetup::new(
            Mesh::uniform(n).unwrap(),
            CoefficientProfile::constant(1.0),
            CoefficientProfile::constant(1.0),
            RescaledContext::unit(0.1, 0.5, 0.1).unwrap(),
            atm,
        )
        .time_step(TimeStep::Fixed(dt))
    }

    #[test]
    fn step_checks_length() {
        let mesh = Mesh::uniform(4).unwrap();
        let ones = vec![1.0; 4];
        let ctx = RescaledContext::unit(0.0, 1.0, 1.0).unwrap();
        let sys = assemble_system(&mesh, &ones, &ones, &ctx, 0.1).unwrap();
        let zero = vec![0.0; 3];
        let atm = AtmosphereSeries::Zero;
        assert_eq!(step(&sys, &zero, &atm, 0.0, 0.1).unwrap(), zero);
        assert!(matches!(step(&sys, &zero, &atm, 0.0, 0.2), Err(Error::TimeStepMismatch { .. })));
    }

    #[test]
    fn step_matches_dense_solve() {
        let mesh = Mesh::uniform(4).unwrap();
        let ones = vec![1.0; 4];
        let ctx = RescaledContext::unit(0.2, 1.0, 1.0).unwrap();
        let sys = assemble_system(&mesh, &ones, &ones, &ctx, 0.05).unwrap();
        let atm = AtmosphereSeries::Ramp { rate: 1.0 };
        let lam = vec![0.1, 0.05, 0.02];
        let x = step(&sys, &lam, &atm, 0.1, 0.15).unwrap();
        let rhs = sys.rhs(&lam, &sys.v1(&atm, 0.1, 0.15).unwrap(), &sys.v3(&atm, 0.15).unwrap()).unwrap();
        let y = dense_solve(&to_dense(&sys.system), &rhs).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn steady_forcing_has_no_jump_term() {
        let mesh = Mesh::uniform(5).unwrap();
        let ones = vec![1.0; 5];
        let ctx = RescaledContext::unit(0.0, 1.0, 1.0).unwrap();
        let atm = AtmosphereSeries::samples(vec![0.0, 0.1, 1.0], vec![0.0, 1.0, 1.0]).unwrap();
        let sys = assemble_system(&mesh, &ones, &ones, &ctx, 0.1).unwrap();
        assert!(sys.v1(&atm, 0.4, 0.5).unwrap().iter().all(|v| *v == 0.0));
        assert!(sys.v3(&atm, 0.5).unwrap()[0] != 0.0);
    }

    #[test]
    fn zero_forcing_stays_zero() {
        let traj = run(&unit_setup(11, AtmosphereSeries::Zero, 0.01)).unwrap();
        assert!(traj.interior.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(traj.reconstruct_full(0).unwrap(), vec![0.0; 11]);
    }

    #[test]
    fn ramp_run_is_bounded() {
        let traj = run(&unit_setup(51, AtmosphereSeries::Ramp { rate: 1.0 }, 0.01)).unwrap();
        assert_eq!(traj.steps(), 100);
        for k in 0..=traj.steps() {
            let full = traj.reconstruct_full(k).unwrap();
            assert_eq!(full[0], traj.times[k]);
            assert!(full.iter().all(|v| *v >= -0.05 && *v <= 1.05), "level {k}");
        }
        assert!(traj.reconstruct_full(101).is_err());
    }

    #[test]
    fn reconstruct_concatenates() {
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            interior: vec![vec![0.0, 0.0], vec![2.0, 3.0]],
            boundary: vec![0.0, 1.5],
            mesh: Mesh::uniform(3).unwrap(),
            dt: 1.0,
            bound: None,
        };
        assert_eq!(traj.reconstruct_full(1).unwrap(), vec![1.5, 2.0, 3.0]);
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, 5).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("t,0.0000000000000000e0,5.0000000000000000e-1,1.0000000000000000e0\n"));
    }

    #[test]
    fn rejects_large_step_unless_forced() {
        let setup = unit_setup(11, AtmosphereSeries::Ramp { rate: 1.0 }, 0.5);
        match run(&setup) {
            Err(Error::TimeStepTooLarge { dt, dt_max }) => {
                assert_eq!(dt, 0.5);
                assert!(dt_max < 0.5);
            }
            other => panic!("unexpected {other:?}"),
        }
        let traj = run(&setup.force(true)).unwrap();
        assert_eq!(traj.steps(), 2);
    }

    #[test]
    fn auto_step_uses_safety_factor() {
        let setup = unit_setup(11, AtmosphereSeries::Ramp { rate: 1.0 }, 0.0).time_step(TimeStep::Auto);
        let traj = run(&setup).unwrap();
        let b = traj.bound.unwrap();
        assert_relative_eq!(traj.dt, 0.9 * b.dt_max, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_runs() {
        let setup = unit_setup(21, AtmosphereSeries::Sinusoid { amplitude: 1.0, frequency: 2.0 }, 0.02);
        assert_eq!(run(&setup).unwrap(), run(&setup).unwrap());
    }
}
