//! Physical parameters, coefficient profiles and atmospheric forcing.
//!
//! All solver work happens on the unit square: depth `z̃ = z / z_F` and time
//! `t̃ = t / T_e`. Profiles are evaluated on `z̃ ∈ [0, 1]`; a profile written in
//! physical depth is brought to the unit interval with
//! [`CoefficientProfile::rescaled`], which composes it with `z̃ ↦ z̃·z_F`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Assumption, Error, Result};
use crate::mesh::Mesh;

/// Physical constants of the firn column (SI lengths, years for time).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Molar mass of the gas, kg/mol.
    pub molar_mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Ideal-gas constant, J/mol/K.
    pub gas_constant: f64,
    /// Mean firn temperature, K.
    pub temperature: f64,
    /// Open/closed pore exchange rate τ, 1/yr.
    pub exchange_rate: f64,
    /// Radioactive decay rate λ, 1/yr.
    pub decay_rate: f64,
    /// Descent speed v, m/yr.
    pub descent_speed: f64,
    /// Air speed w_air, m/yr. May be zero.
    pub air_speed: f64,
    /// Firn depth z_F, m.
    pub firn_depth: f64,
    /// Final physical time T_e, yr.
    pub final_time: f64,
}

/// Tabulated ranges outside which a parameter draws a warning.
pub const DECAY_RATE_RANGE: (f64, f64) = (0.5, 0.999);
pub const MOLAR_MASS_RANGE: (f64, f64) = (0.004, 0.133);

impl ModelParams {
    /// CO2 in a 100 m firn column over 100 years.
    pub fn co2_reference() -> Self {
        Self {
            molar_mass: 0.044,
            gravity: 9.80665,
            gas_constant: 8.314,
            temperature: 242.0,
            exchange_rate: 0.3,
            decay_rate: 0.5,
            descent_speed: 0.2,
            air_speed: 0.0,
            firn_depth: 100.0,
            final_time: 100.0,
        }
    }

    /// Checks positivity of every field. Returns warnings for values outside
    /// the tabulated ranges; those are not errors.
    pub fn validate(&self) -> Result<Vec<String>> {
        let positive = [
            ("molar_mass", self.molar_mass),
            ("gravity", self.gravity),
            ("gas_constant", self.gas_constant),
            ("temperature", self.temperature),
            ("exchange_rate", self.exchange_rate),
            ("decay_rate", self.decay_rate),
            ("descent_speed", self.descent_speed),
            ("firn_depth", self.firn_depth),
            ("final_time", self.final_time),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(field, format!("must be finite and > 0, got {value}")));
            }
        }
        if !(self.air_speed.is_finite() && self.air_speed >= 0.0) {
            return Err(Error::param(
                "air_speed",
                format!("must be finite and >= 0, got {}", self.air_speed),
            ));
        }

        let mut warnings = Vec::new();
        let (lo, hi) = DECAY_RATE_RANGE;
        if !(lo..=hi).contains(&self.decay_rate) {
            warnings.push(format!(
                "decay_rate = {} outside the tabulated range [{lo}, {hi}]",
                self.decay_rate
            ));
        }
        let (lo, hi) = MOLAR_MASS_RANGE;
        if !(lo..=hi).contains(&self.molar_mass) {
            warnings.push(format!(
                "molar_mass = {} outside the tabulated range [{lo}, {hi}]",
                self.molar_mass
            ));
        }
        Ok(warnings)
    }
}

/// Reduced coefficients `𝓜 = M g / (R T)`, `𝓖 = τ + λ`, `𝓕 = v + w_air`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedCoefficients {
    /// Gravitational drift coefficient 𝓜, 1/m.
    pub mcoef: f64,
    /// Total loss rate 𝓖, 1/yr.
    pub gcoef: f64,
    /// Total advection speed 𝓕, m/yr.
    pub fcoef: f64,
}

pub fn derive_coefficients(params: &ModelParams) -> Result<ReducedCoefficients> {
    params.validate()?;
    Ok(ReducedCoefficients {
        mcoef: params.molar_mass * params.gravity / (params.gas_constant * params.temperature),
        gcoef: params.exchange_rate + params.decay_rate,
        fcoef: params.descent_speed + params.air_speed,
    })
}

/// Everything the rescaled bilinear form needs besides the profiles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaledContext {
    pub final_time: f64,
    pub firn_depth: f64,
    pub mcoef: f64,
    pub gcoef: f64,
    pub fcoef: f64,
}

impl RescaledContext {
    /// Builds a context directly. The reduced coefficients may be zero here,
    /// which is convenient for isolating single terms of the operator.
    pub fn new(final_time: f64, firn_depth: f64, mcoef: f64, gcoef: f64, fcoef: f64) -> Result<Self> {
        for (field, value) in [("final_time", final_time), ("firn_depth", firn_depth)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::param(field, format!("must be finite and > 0, got {value}")));
            }
        }
        for (field, value) in [("mcoef", mcoef), ("gcoef", gcoef), ("fcoef", fcoef)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::param(field, format!("must be finite and >= 0, got {value}")));
            }
        }
        Ok(Self { final_time, firn_depth, mcoef, gcoef, fcoef })
    }

    /// Unit-square context: `T_e = z_F = 1`.
    pub fn unit(mcoef: f64, gcoef: f64, fcoef: f64) -> Result<Self> {
        Self::new(1.0, 1.0, mcoef, gcoef, fcoef)
    }

    pub fn depth_to_unit(&self, depth: f64) -> f64 {
        depth / self.firn_depth
    }

    pub fn time_to_unit(&self, time: f64) -> f64 {
        time / self.final_time
    }

    pub fn unit_to_depth(&self, z: f64) -> f64 {
        z * self.firn_depth
    }

    pub fn unit_to_time(&self, t: f64) -> f64 {
        t * self.final_time
    }
}

pub fn rescale(params: &ModelParams) -> Result<RescaledContext> {
    let coefs = derive_coefficients(params)?;
    RescaledContext::new(
        params.final_time,
        params.firn_depth,
        coefs.mcoef,
        coefs.gcoef,
        coefs.fcoef,
    )
}

/// Closed-form or sampled description of `f(z)` or `D(z)`.
#[derive(Clone)]
pub enum ProfileKind {
    Constant(f64),
    /// `intercept + slope·z`
    Affine { intercept: f64, slope: f64 },
    /// `Σ c_k z^k`, coefficients in ascending order.
    Polynomial(Vec<f64>),
    /// `scale·exp(rate·z)`
    Exponential { scale: f64, rate: f64 },
    /// Effective firn diffusivity: `D_eddy + r c_f D_co2` above the eddy
    /// depth, `r D_co2` below it.
    FirnDiffusion {
        eddy_depth: f64,
        species_ratio: f64,
        eddy_factor: f64,
        eddy: Box<CoefficientProfile>,
        co2_air: Box<CoefficientProfile>,
    },
    /// Values at the nodes of a mesh, linear in between.
    NodeSampled { nodes: Vec<f64>, values: Vec<f64> },
    /// User table `(z, value)`, linear in between.
    Tabulated { z: Vec<f64>, values: Vec<f64> },
    /// Arbitrary closure, mostly for experiments and tests.
    Custom { label: String, func: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Self::Affine { intercept, slope } => f
                .debug_struct("Affine")
                .field("intercept", intercept)
                .field("slope", slope)
                .finish(),
            Self::Polynomial(c) => f.debug_tuple("Polynomial").field(c).finish(),
            Self::Exponential { scale, rate } => f
                .debug_struct("Exponential")
                .field("scale", scale)
                .field("rate", rate)
                .finish(),
            Self::FirnDiffusion { eddy_depth, species_ratio, eddy_factor, eddy, co2_air } => f
                .debug_struct("FirnDiffusion")
                .field("eddy_depth", eddy_depth)
                .field("species_ratio", species_ratio)
                .field("eddy_factor", eddy_factor)
                .field("eddy", eddy)
                .field("co2_air", co2_air)
                .finish(),
            Self::NodeSampled { nodes, .. } => {
                f.debug_struct("NodeSampled").field("len", &nodes.len()).finish()
            }
            Self::Tabulated { z, .. } => f.debug_struct("Tabulated").field("len", &z.len()).finish(),
            Self::Custom { label, .. } => f.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientProfile {
    kind: ProfileKind,
    upper_bound: Option<f64>,
    /// Multiplier applied to the unit coordinate before evaluating `kind`.
    depth_scale: f64,
}

impl CoefficientProfile {
    pub fn new(kind: ProfileKind) -> Result<Self> {
        match &kind {
            ProfileKind::Polynomial(c) if c.is_empty() => {
                return Err(Error::param("coefficients", "polynomial needs at least one coefficient"))
            }
            ProfileKind::NodeSampled { nodes: xs, values } | ProfileKind::Tabulated { z: xs, values } => {
                check_table(xs, values)?
            }
            ProfileKind::FirnDiffusion { eddy_depth, species_ratio, eddy_factor, .. } => {
                for (field, v) in [
                    ("z_eddy", *eddy_depth),
                    ("r_alpha", *species_ratio),
                    ("c_f", *eddy_factor),
                ] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(Error::param(field, format!("must be finite and >= 0, got {v}")));
                    }
                }
            }
            _ => {}
        }
        Ok(Self { kind, upper_bound: None, depth_scale: 1.0 })
    }

    pub fn constant(value: f64) -> Self {
        Self { kind: ProfileKind::Constant(value), upper_bound: None, depth_scale: 1.0 }
    }

    pub fn affine(intercept: f64, slope: f64) -> Self {
        Self { kind: ProfileKind::Affine { intercept, slope }, upper_bound: None, depth_scale: 1.0 }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Result<Self> {
        Self::new(ProfileKind::Polynomial(coefficients))
    }

    pub fn exponential(scale: f64, rate: f64) -> Self {
        Self { kind: ProfileKind::Exponential { scale, rate }, upper_bound: None, depth_scale: 1.0 }
    }

    pub fn tabulated(z: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        Self::new(ProfileKind::Tabulated { z, values })
    }

    pub fn node_sampled(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        Self::new(ProfileKind::NodeSampled { nodes: mesh.nodes().to_vec(), values })
    }

    pub fn firn_diffusion(
        eddy_depth: f64,
        species_ratio: f64,
        eddy_factor: f64,
        eddy: CoefficientProfile,
        co2_air: CoefficientProfile,
    ) -> Result<Self> {
        Self::new(ProfileKind::FirnDiffusion {
            eddy_depth,
            species_ratio,
            eddy_factor,
            eddy: Box::new(eddy),
            co2_air: Box::new(co2_air),
        })
    }

    pub fn custom(label: impl Into<String>, func: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind: ProfileKind::Custom { label: label.into(), func: Arc::new(func) },
            upper_bound: None,
            depth_scale: 1.0,
        }
    }

    /// Declares the cap `f_max` / `D_max` checked by the admissibility analysis.
    pub fn with_upper_bound(mut self, bound: f64) -> Self {
        self.upper_bound = Some(bound);
        self
    }

    /// Treats `kind` as a function of physical depth on `[0, depth]`.
    pub fn rescaled(mut self, depth: f64) -> Self {
        self.depth_scale *= depth;
        self
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn upper_bound(&self) -> Option<f64> {
        self.upper_bound
    }

    /// Evaluates at a unit coordinate.
    pub fn eval(&self, z: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::OutOfDomain(z));
        }
        Ok(self.value_at(z))
    }

    /// Evaluation without the domain check; callers guarantee `z ∈ [0, 1]`.
    pub fn value_at(&self, z: f64) -> f64 {
        self.kind.value(z * self.depth_scale)
    }

    /// Node samples `(p(z_1), …, p(z_n))`.
    pub fn sample(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.nodes().iter().map(|&z| self.value_at(z)).collect()
    }

    /// Node-wise admissibility: finite everywhere, `> 0` on every node with
    /// `z < 1`, `≥ 0` at `z = 1`, and below the declared cap.
    pub fn check_nodes(&self, nodes: &[f64], assumption: Assumption) -> Result<()> {
        for &z in nodes {
            let v = self.value_at(z);
            let bad = if z < 1.0 { !(v > 0.0) } else { !(v >= 0.0) };
            if !v.is_finite() || bad {
                return Err(Error::AssumptionViolated {
                    assumption,
                    detail: format!("value {v} at z = {z}"),
                });
            }
            if let Some(cap) = self.upper_bound {
                if v > cap {
                    return Err(Error::AssumptionViolated {
                        assumption,
                        detail: format!("value {v} at z = {z} exceeds the upper bound {cap}"),
                    });
                }
            }
        }
        Ok(())
    }
}

impl ProfileKind {
    fn value(&self, z: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Affine { intercept, slope } => intercept + slope * z,
            Self::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * z + ck),
            Self::Exponential { scale, rate } => scale * (rate * z).exp(),
            Self::FirnDiffusion { eddy_depth, species_ratio, eddy_factor, eddy, co2_air } => {
                let co2 = co2_air.value_at(z);
                if z <= *eddy_depth {
                    eddy.value_at(z) + species_ratio * eddy_factor * co2
                } else {
                    species_ratio * co2
                }
            }
            Self::NodeSampled { nodes: xs, values } | Self::Tabulated { z: xs, values } => {
                interpolate(xs, values, z)
            }
            Self::Custom { func, .. } => func(z),
        }
    }
}

fn check_table(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::param("table", "needs at least two rows"));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::param("table", "entries must be finite"));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("table", "abscissae must be strictly increasing"));
    }
    Ok(())
}

/// Piecewise-linear interpolation, constant extrapolation outside the table.
pub(crate) fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    let k = xs.partition_point(|&xi| xi <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let (y0, y1) = (ys[k - 1], ys[k]);
    if x == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Atmospheric concentration at the firn surface on the rescaled time axis.
#[derive(Debug, Clone, PartialEq)]
pub enum AtmosphereSeries {
    Zero,
    /// `rate·t`
    Ramp { rate: f64 },
    /// `amplitude·sin(2π·frequency·t)`
    Sinusoid { amplitude: f64, frequency: f64 },
    /// Piecewise-linear samples.
    Samples { times: Vec<f64>, values: Vec<f64> },
}

impl AtmosphereSeries {
    pub fn samples(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let series = Self::Samples { times, values };
        series.validate()?;
        Ok(series)
    }

    pub fn validate(&self) -> Result<()> {
        let violated = |detail: String| Error::AssumptionViolated {
            assumption: Assumption::AtmosphereRegularity,
            detail,
        };
        match self {
            Self::Zero => Ok(()),
            Self::Ramp { rate } if rate.is_finite() => Ok(()),
            Self::Sinusoid { amplitude, frequency } if amplitude.is_finite() && frequency.is_finite() => Ok(()),
            Self::Samples { times, values } => {
                check_table(times, values).map_err(|e| violated(e.to_string()))?;
                if times[0] != 0.0 {
                    return Err(violated(format!("first sample time is {}, expected 0", times[0])));
                }
                if values[0] != 0.0 {
                    return Err(violated(format!("value at t = 0 is {}, expected 0", values[0])));
                }
                if *times.last().unwrap() < 1.0 {
                    return Err(violated("samples do not reach t = 1".into()));
                }
                Ok(())
            }
            other => Err(violated(format!("non-finite parameters in {other:?}"))),
        }
    }

    /// `ρ_atm(t)` for rescaled `t ∈ [0, 1]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfDomain(t));
        }
        Ok(match self {
            Self::Zero => 0.0,
            Self::Ramp { rate } => rate * t,
            Self::Sinusoid { amplitude, frequency } => {
                amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin()
            }
            Self::Samples { times, values } => interpolate(times, values, t),
        })
    }

    /// The same series multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            Self::Zero => Self::Zero,
            Self::Ramp { rate } => Self::Ramp { rate: alpha * rate },
            Self::Sinusoid { amplitude, frequency } => {
                Self::Sinusoid { amplitude: alpha * amplitude, frequency: *frequency }
            }
            Self::Samples { times, values } => Self::Samples {
                times: times.clone(),
                values: values.iter().map(|v| alpha * v).collect(),
            },
        }
    }
}
