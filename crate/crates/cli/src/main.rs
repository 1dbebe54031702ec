//! `firn`: run, check or verify a firn transport configuration.
//!
//! Exit codes: 0 success, 1 input error, 2 admissibility failure, 3 numerical
//! failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::config::{DtSetting, Overrides};

#[derive(Debug, Parser)]
#[command(name = "firn", version, about = "Degenerate firn gas transport: P1 elements, implicit Euler")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; without it results go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Uniform mesh with this many nodes, overriding the config.
    #[arg(long)]
    pub n: Option<usize>,
    /// Step length on the rescaled time axis, or `auto`.
    #[arg(long, value_parser = DtSetting::parse)]
    pub dt: Option<DtSetting>,
    /// Emit the stability report without solving.
    #[arg(long, conflicts_with = "oracle_compare")]
    pub check_only: bool,
    /// Proceed past failed admissibility checks.
    #[arg(long)]
    pub force: bool,
    /// Compare assembled matrices with quadrature references.
    #[arg(long)]
    pub oracle_compare: bool,
    /// Write every k-th time level of the trajectory.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub stride: u64,
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Core(firn_core::Error),
    /// Oracle deviations outside tolerance.
    Tolerance(String),
}

impl From<firn_core::Error> for CliError {
    fn from(e: firn_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(s) | CliError::Tolerance(s) => f.write_str(s),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use firn_core::Error as E;
        match self {
            CliError::Input(_) => 1,
            CliError::Core(e) if e.is_admissibility() => 2,
            CliError::Core(
                E::Io(_)
                | E::InvalidParameter { .. }
                | E::InvalidMesh(_)
                | E::OutOfDomain(_)
                | E::Precondition(_)
                | E::DimensionMismatch { .. },
            ) => 1,
            CliError::Core(_) | CliError::Tolerance(_) => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { n: cli.n, dt: cli.dt };
    let result = config::load(&cli.config, overrides).and_then(|cfg| {
        for w in &cfg.warnings {
            eprintln!("warning: {w}");
        }
        if cli.oracle_compare {
            commands::oracle_compare(&cli, &cfg)
        } else if cli.check_only {
            commands::check(&cli, &cfg)
        } else {
            commands::run(&cli, &cfg)
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
