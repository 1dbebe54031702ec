use std::fs;
use std::io::Write;
use std::path::Path;

use firn_core::analysis::{check_pd, stability_bound, StabilityAnalysis, StabilityReport, AUTO_DT_SAFETY};
use firn_core::assembly::assemble_system;
use firn_core::mesh::Mesh;
use firn_core::model::CoefficientProfile;
use firn_core::oracle::{mvt_deviation, QuadratureRule, ReferenceKind};
use firn_core::report::KeyValueReport;
use firn_core::solver::{run as solve, SimulationSetup, TimeStep};
use firn_core::Error;

use crate::config::Resolved;
use crate::{Cli, CliError};

fn require_step(cfg: &Resolved) -> Result<TimeStep, CliError> {
    cfg.time_step
        .ok_or_else(|| CliError::Input("no time step: set `dt` in [time] or pass --dt FLOAT|auto".into()))
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn emit_report(cli: &Cli, report: &KeyValueReport, stem: &str) -> Result<(), CliError> {
    match &cli.out {
        Some(dir) => {
            write_file(dir, &format!("{stem}.txt"), report.to_text().as_bytes())?;
            write_file(dir, &format!("{stem}.json"), report.to_json().as_bytes())
        }
        None => {
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

fn analyse(cfg: &Resolved, dt: Option<f64>) -> Result<StabilityReport, Error> {
    let mut a = StabilityAnalysis::new(&cfg.f, &cfg.d, &cfg.mesh, cfg.context).c_d(cfg.c_d);
    if let Some(dt) = dt {
        a = a.dt(dt);
    }
    a.run()
}

/// `--check-only`
pub fn check(cli: &Cli, cfg: &Resolved) -> Result<(), CliError> {
    let step = require_step(cfg)?;
    let fixed = match step {
        TimeStep::Fixed(dt) => Some(dt),
        TimeStep::Auto => None,
    };
    let report = analyse(cfg, fixed)?;
    emit_report(cli, &report.to_key_values(), "report")?;
    if let Some(dt) = fixed {
        if dt >= report.bound.dt_max && !cli.force {
            return Err(Error::TimeStepTooLarge { dt, dt_max: report.bound.dt_max }.into());
        }
    }
    Ok(())
}

/// Default command: solve and write the trajectory and the report.
pub fn run(cli: &Cli, cfg: &Resolved) -> Result<(), CliError> {
    let step = require_step(cfg)?;
    let setup = SimulationSetup::new(cfg.mesh.clone(), cfg.f.clone(), cfg.d.clone(), cfg.context, cfg.atmosphere.clone())
        .time_step(step)
        .force(cli.force)
        .c_d(cfg.c_d);
    let traj = solve(&setup)?;
    if traj.interior.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Core(Error::Precondition("non-finite values in the solution".into())));
    }
    let mut csv = Vec::new();
    traj.write_csv(&mut csv, cli.stride as usize)
        .map_err(|e| CliError::Input(e.to_string()))?;

    let report = match analyse(cfg, Some(traj.dt)) {
        Ok(r) => {
            let mut kv = r.to_key_values();
            kv.int("steps", traj.steps() as i64);
            kv
        }
        Err(e) => {
            // only reachable with --force
            let mut kv = KeyValueReport::new();
            kv.comment(format!("stability analysis failed: {e}"));
            kv.num("dt", traj.dt).int("steps", traj.steps() as i64);
            kv
        }
    };
    match &cli.out {
        Some(dir) => {
            write_file(dir, "trajectory.csv", &csv)?;
            emit_report(cli, &report, "report")
        }
        None => {
            std::io::stdout()
                .write_all(&csv)
                .map_err(|e| CliError::Input(e.to_string()))?;
            eprint!("{}", report.to_text());
            Ok(())
        }
    }
}

/// Sup norms of the first three derivatives, by forward differences.
fn derivative_bounds(p: &CoefficientProfile) -> [f64; 3] {
    let eta = 1e-3;
    let samples = 1000;
    let mut out = [0.0f64; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let order = k + 1;
        let span = order as f64 * eta;
        for s in 0..=samples {
            let z = (1.0 - span) * s as f64 / samples as f64;
            // k-th forward difference with binomial weights
            let mut acc = 0.0;
            let mut binom = 1.0;
            for j in 0..=order {
                let sign = if (order - j) % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * binom * p.value_at(z + j as f64 * eta);
                binom = binom * (order - j) as f64 / (j + 1) as f64;
            }
            *slot = slot.max((acc / eta.powi(order as i32)).abs());
        }
    }
    out
}

struct Compared {
    name: &'static str,
    kind: ReferenceKind,
    weight: CoefficientProfile,
    scale: f64,
}

/// `--oracle-compare`
pub fn oracle_compare(cli: &Cli, cfg: &Resolved) -> Result<(), CliError> {
    let rule = QuadratureRule::default();
    let mut meshes = vec![cfg.mesh.clone()];
    if cfg.mesh.uniform_h().is_some() {
        let n = cfg.mesh.len();
        meshes.push(Mesh::uniform(2 * n - 1)?);
        meshes.push(Mesh::uniform(4 * n - 3)?);
    }
    let h = cfg.mesh.uniform_h().unwrap_or_else(|| cfg.mesh.h_max());
    let fc = cfg.context.fcoef;
    let items = [
        Compared { name: "M", kind: ReferenceKind::Mass, weight: CoefficientProfile::constant(1.0), scale: 1.0 },
        Compared { name: "M_f", kind: ReferenceKind::WeightedMass, weight: cfg.f.clone(), scale: 1.0 },
        Compared { name: "K_f", kind: ReferenceKind::WeightedSlopeValue, weight: cfg.f.clone(), scale: fc },
        Compared { name: "A", kind: ReferenceKind::WeightedSlopeValue, weight: cfg.d.clone(), scale: 1.0 },
        Compared { name: "S", kind: ReferenceKind::WeightedSlopeSlope, weight: cfg.d.clone(), scale: 1.0 },
    ];

    let mut report = KeyValueReport::new();
    report.comment("assembled matrices against order-5 Gauss quadrature");
    report.comment("tolerances follow the leading error term of the endpoint-average rule");
    report.int("n", cfg.mesh.len() as i64).num("h", h);
    let mut failures = Vec::new();
    for item in &items {
        let errs = meshes
            .iter()
            .map(|m| Ok(item.scale * mvt_deviation(&item.weight, item.kind, m, &rule)?))
            .collect::<Result<Vec<f64>, Error>>()?;
        let [d1, d2, d3] = derivative_bounds(&item.weight);
        let tol = match item.kind {
            ReferenceKind::Mass => 1e-13,
            ReferenceKind::WeightedMass => 2.0 * (h * h * d1 / 12.0 + h.powi(3) * d2) + 1e-13,
            ReferenceKind::WeightedSlopeValue => item.scale * 2.0 * (h * d1 / 6.0 + h * h * d2) + 1e-13,
            ReferenceKind::WeightedSlopeSlope => 2.0 * (h * d2 / 6.0 + h * h * d3) + 1e-12,
        };
        let ok = errs[0] <= tol;
        if !ok {
            failures.push(item.name);
        }
        report.num(format!("deviation_{}", item.name), errs[0]);
        report.num(format!("tolerance_{}", item.name), tol);
        report.flag(format!("within_{}", item.name), ok);
        for (k, w) in errs.windows(2).enumerate() {
            report.num(format!("ratio_{}_{}", item.name, k + 1), w[0] / w[1]);
        }
    }

    let step = cfg.time_step.unwrap_or(TimeStep::Auto);
    let dt = match step {
        TimeStep::Fixed(dt) => dt,
        TimeStep::Auto => {
            let b = stability_bound(&cfg.f, &cfg.d, &cfg.mesh, &cfg.context, cfg.c_d, None)?;
            (AUTO_DT_SAFETY * b.dt_max).min(1.0)
        }
    };
    let sys = assemble_system(&cfg.mesh, &cfg.f.sample(&cfg.mesh), &cfg.d.sample(&cfg.mesh), &cfg.context, dt)?;
    report.num("dt", dt);
    for (name, m) in sys.matrices() {
        let v = check_pd(m)?;
        report.flag(format!("pd_{name}"), v.positive_definite);
        report.num(format!("min_eig_{name}"), v.min_eigenvalue);
    }
    emit_report(cli, &report, "oracle")?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Tolerance(format!("deviation above tolerance for {}", failures.join(", "))))
    }
}
