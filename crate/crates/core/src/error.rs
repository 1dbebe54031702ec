use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Admissibility hypotheses on the coefficient profiles and the forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assumption {
    /// `0 ≤ f ≤ f_max` with `f > 0` on `[0, 1)`.
    PoreFractionPositivity,
    /// `0 ≤ D ≤ D_max` with `D > 0` on `[0, 1)`.
    DiffusionPositivity,
    /// `|D(z) − D(y)| ≤ L |z − y|`.
    DiffusionLipschitz,
    /// `ρ_atm ∈ H¹(0, T)` with `ρ_atm(0) = 0`.
    AtmosphereRegularity,
    /// `sup D/f < ∞` and `sup f/D < ∞`.
    BoundedRatios,
    /// `sup (z_F − z) ∫₀^z 1/D < ∞` (weighted Poincaré condition).
    PoincareCondition,
}

impl Assumption {
    pub fn key(self) -> &'static str {
        match self {
            Self::PoreFractionPositivity => "pore-fraction-positivity",
            Self::DiffusionPositivity => "diffusion-positivity",
            Self::DiffusionLipschitz => "diffusion-lipschitz",
            Self::AtmosphereRegularity => "atmosphere-regularity",
            Self::BoundedRatios => "bounded-ratios",
            Self::PoincareCondition => "poincare-condition",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self {
            Self::PoreFractionPositivity => "open-pore fraction positivity (f > 0 on [0,1), f <= f_max)",
            Self::DiffusionPositivity => "diffusion positivity (D > 0 on [0,1), D <= D_max)",
            Self::DiffusionLipschitz => "Lipschitz continuity of D",
            Self::AtmosphereRegularity => "atmospheric forcing regularity (rho_atm(0) = 0)",
            Self::BoundedRatios => "bounded ratios D/f and f/D",
            Self::PoincareCondition => "weighted Poincare condition on 1/D",
        };
        write!(f, "{} [{}]", text, self.key())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("coordinate {0} lies outside [0, 1]")]
    OutOfDomain(f64),
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("basis index pair ({i}, {j}) outside 1..={n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("assumption violated: {assumption}: {detail}")]
    AssumptionViolated { assumption: Assumption, detail: String },
    #[error("integral of 1/D diverges towards the firn bottom ({0})")]
    DivergentIntegral(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("singular system: pivot {pivot:e} at row {row}")]
    Singular { row: usize, pivot: f64 },
    #[error("step length {found} does not match the assembled time step {expected}")]
    TimeStepMismatch { expected: f64, found: f64 },
    #[error("time step {dt} exceeds the admissible bound dt_max = {dt_max:.17e}")]
    TimeStepTooLarge { dt: f64, dt_max: f64 },
    #[error("symmetric eigenvalue iteration did not converge")]
    EigenNonConvergence,
    #[error("{0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Self::InvalidParameter { field, reason: reason.into() }
    }

    /// True for failures of an admissibility check, as opposed to numerical or I/O failures.
    pub fn is_admissibility(&self) -> bool {
        matches!(
            self,
            Self::AssumptionViolated { .. }
                | Self::DivergentIntegral(_)
                | Self::TimeStepTooLarge { .. }
        )
    }
}
