//! Degenerate advection–diffusion–reaction transport of trace gases in polar firn.
//!
//! The crate discretizes
//!
//! ```text
//! ∂t(f ρ) + ∂z(f 𝓕 ρ) + 𝓖 ρ = ∂z[D (∂z ρ − 𝓜 ρ)],   z ∈ (0, z_F)
//! ρ(0, t) = ρ_atm(t),   D(z_F)(∂z ρ − 𝓜 ρ)(z_F) = 0,   ρ(z, 0) = 0
//! ```
//!
//! with continuous piecewise-linear (P1) finite elements on the rescaled unit
//! interval and implicit Euler in time. Both `f` and `D` may vanish at the
//! bottom of the firn.
//!
//! Module map:
//!
//! - [`model`]: physical parameters, coefficient profiles, atmospheric forcing.
//! - [`mesh`]: partitions of `[0, 1]`.
//! - [`assembly`]: inner products and the tridiagonal matrices of the discrete system.
//! - [`analysis`]: admissibility checks, stability constants and time-step bound.
//! - [`solver`]: the time loop and the banded linear solve.
//! - [`oracle`]: quadrature and dense linear algebra used for verification.
//! - [`report`]: deterministic text/JSON/CSV emitters.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod mesh;
pub mod model;
pub mod oracle;
pub mod report;
pub mod solver;

pub use error::{Assumption, Error, Result};
