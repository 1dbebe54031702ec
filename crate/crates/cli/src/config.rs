//! TOML run configuration.
//!
//! ```toml
//! [coefficients]            # or [params] with the physical constants
//! mcoef = 0.1
//! gcoef = 1.0
//! fcoef = 0.5
//!
//! [mesh]
//! n = 51                    # or nodes = [...], or file = "nodes.csv"
//!
//! [time]
//! dt = "auto"               # or a number on the rescaled time axis
//!
//! [profiles.f]
//! kind = "affine"
//! intercept = 1.0
//! slope = -1.0
//!
//! [profiles.diffusion]
//! kind = "constant"
//! value = 1.0
//!
//! [atmosphere]
//! kind = "ramp"
//! rate = 1.0
//!
//! [analysis]
//! c_d = 1.0
//! ```

use std::path::{Path, PathBuf};

use firn_core::mesh::Mesh;
use firn_core::model::{rescale, AtmosphereSeries, CoefficientProfile, ModelParams, RescaledContext};
use firn_core::solver::TimeStep;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub params: Option<ParamsSection>,
    pub coefficients: Option<CoefficientsSection>,
    #[serde(default)]
    pub mesh: MeshSection,
    #[serde(default)]
    pub time: TimeSection,
    pub profiles: ProfilesSection,
    #[serde(default)]
    pub atmosphere: AtmosphereSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

/// Physical constants; missing fields take the CO2 reference values.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub molar_mass: Option<f64>,
    pub gravity: Option<f64>,
    pub gas_constant: Option<f64>,
    pub temperature: Option<f64>,
    pub exchange_rate: Option<f64>,
    pub decay_rate: Option<f64>,
    pub descent_speed: Option<f64>,
    pub air_speed: Option<f64>,
    pub firn_depth: Option<f64>,
    pub final_time: Option<f64>,
}

/// Reduced coefficients given directly.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsSection {
    pub mcoef: f64,
    pub gcoef: f64,
    pub fcoef: f64,
    #[serde(default = "one")]
    pub firn_depth: f64,
    #[serde(default = "one")]
    pub final_time: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub n: Option<usize>,
    pub nodes: Option<Vec<f64>>,
    pub file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub dt: Option<DtSetting>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum DtSetting {
    Value(f64),
    Keyword(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoKeyword {
    Auto,
}

impl DtSetting {
    pub fn parse(text: &str) -> Result<Self, String> {
        if text.eq_ignore_ascii_case("auto") {
            return Ok(Self::Keyword(AutoKeyword::Auto));
        }
        text.parse::<f64>()
            .map(Self::Value)
            .map_err(|e| format!("expected a number or `auto`, got `{text}`: {e}"))
    }

    fn time_step(self) -> TimeStep {
        match self {
            Self::Value(dt) => TimeStep::Fixed(dt),
            Self::Keyword(AutoKeyword::Auto) => TimeStep::Auto,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfilesSection {
    pub f: ProfileSection,
    pub diffusion: ProfileSection,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ProfileSection {
    #[serde(flatten)]
    pub spec: ProfileSpec,
    pub upper_bound: Option<f64>,
    /// The formula is written in physical depth on `[0, z_F]`.
    #[serde(default)]
    pub physical_depth: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileSpec {
    Constant { value: f64 },
    Affine { intercept: f64, slope: f64 },
    Polynomial { coefficients: Vec<f64> },
    Exponential { scale: f64, rate: f64 },
    Table { z: Option<Vec<f64>>, values: Option<Vec<f64>>, file: Option<PathBuf> },
    Firn {
        eddy_depth: f64,
        species_ratio: f64,
        eddy_factor: f64,
        eddy: Box<ProfileSection>,
        co2_air: Box<ProfileSection>,
    },
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct AtmosphereSection {
    #[serde(flatten)]
    pub spec: AtmosphereSpec,
    /// Sample times are in physical years rather than on `[0, 1]`.
    #[serde(default)]
    pub physical_time: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AtmosphereSpec {
    #[default]
    Zero,
    Ramp { rate: f64 },
    Sinusoid { amplitude: f64, frequency: f64 },
    Samples { times: Option<Vec<f64>>, values: Option<Vec<f64>>, file: Option<PathBuf> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default = "one")]
    pub c_d: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self { c_d: 1.0 }
    }
}

/// Everything a command needs, resolved against the config directory.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub mesh: Mesh,
    pub f: CoefficientProfile,
    pub d: CoefficientProfile,
    pub context: RescaledContext,
    pub atmosphere: AtmosphereSeries,
    pub time_step: Option<TimeStep>,
    pub c_d: f64,
    pub warnings: Vec<String>,
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub dt: Option<DtSetting>,
}

pub fn load(path: &Path, overrides: Overrides) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let file: ConfigFile = toml::from_str(&text).map_err(|e| CliError::Input(format_toml_error(path, &text, &e)))?;
    let base = path.parent().unwrap_or(Path::new("."));
    file.resolve(base, overrides)
}

fn format_toml_error(path: &Path, text: &str, e: &toml::de::Error) -> String {
    let line = e.span().map(|s| text[..s.start.min(text.len())].lines().count().max(1));
    match line {
        Some(l) => format!("{}:{l}: {}", path.display(), e.message()),
        None => format!("{}: {}", path.display(), e.message()),
    }
}

impl ConfigFile {
    pub fn resolve(self, base: &Path, overrides: Overrides) -> Result<Resolved, CliError> {
        let mut warnings = Vec::new();
        let context = match (&self.coefficients, &self.params) {
            (Some(_), Some(_)) => {
                return Err(CliError::Input("give either [params] or [coefficients], not both".into()))
            }
            (Some(c), None) => RescaledContext::new(c.final_time, c.firn_depth, c.mcoef, c.gcoef, c.fcoef)?,
            (None, p) => {
                let params = p.as_ref().map(ParamsSection::to_params).unwrap_or_else(ModelParams::co2_reference);
                warnings.extend(params.validate()?);
                rescale(&params)?
            }
        };

        let mesh = match (overrides.n, &self.mesh) {
            (Some(n), _) => Mesh::uniform(n)?,
            (None, MeshSection { n: Some(n), nodes: None, file: None }) => Mesh::uniform(*n)?,
            (None, MeshSection { n: None, nodes: Some(nodes), file: None }) => Mesh::graded(nodes.clone())?,
            (None, MeshSection { n: None, nodes: None, file: Some(f) }) => Mesh::from_csv(&base.join(f))?,
            _ => return Err(CliError::Input("[mesh] needs exactly one of n, nodes, file".into())),
        };

        let f = build_profile(&self.profiles.f, base, context.firn_depth)?;
        let d = build_profile(&self.profiles.diffusion, base, context.firn_depth)?;
        let atmosphere = build_atmosphere(&self.atmosphere, base, context.final_time)?;
        let time_step = overrides.dt.or(self.time.dt).map(DtSetting::time_step);

        Ok(Resolved { mesh, f, d, context, atmosphere, time_step, c_d: self.analysis.c_d, warnings })
    }
}

impl ParamsSection {
    fn to_params(&self) -> ModelParams {
        let r = ModelParams::co2_reference();
        ModelParams {
            molar_mass: self.molar_mass.unwrap_or(r.molar_mass),
            gravity: self.gravity.unwrap_or(r.gravity),
            gas_constant: self.gas_constant.unwrap_or(r.gas_constant),
            temperature: self.temperature.unwrap_or(r.temperature),
            exchange_rate: self.exchange_rate.unwrap_or(r.exchange_rate),
            decay_rate: self.decay_rate.unwrap_or(r.decay_rate),
            descent_speed: self.descent_speed.unwrap_or(r.descent_speed),
            air_speed: self.air_speed.unwrap_or(r.air_speed),
            firn_depth: self.firn_depth.unwrap_or(r.firn_depth),
            final_time: self.final_time.unwrap_or(r.final_time),
        }
    }
}

fn build_profile(section: &ProfileSection, base: &Path, depth: f64) -> Result<CoefficientProfile, CliError> {
    let mut p = match &section.spec {
        ProfileSpec::Constant { value } => CoefficientProfile::constant(*value),
        ProfileSpec::Affine { intercept, slope } => CoefficientProfile::affine(*intercept, *slope),
        ProfileSpec::Polynomial { coefficients } => CoefficientProfile::polynomial(coefficients.clone())?,
        ProfileSpec::Exponential { scale, rate } => CoefficientProfile::exponential(*scale, *rate),
        ProfileSpec::Table { z, values, file } => {
            let (z, values) = inline_or_file(z, values, file, base, "z")?;
            CoefficientProfile::tabulated(z, values)?
        }
        ProfileSpec::Firn { eddy_depth, species_ratio, eddy_factor, eddy, co2_air } => {
            // the sub-profiles see the same coordinate as the outer one
            let inner = |s: &ProfileSection| -> Result<CoefficientProfile, CliError> {
                let mut s = s.clone();
                s.physical_depth = false;
                build_profile(&s, base, depth)
            };
            CoefficientProfile::firn_diffusion(
                *eddy_depth,
                *species_ratio,
                *eddy_factor,
                inner(eddy)?,
                inner(co2_air)?,
            )?
        }
    };
    if section.physical_depth {
        p = p.rescaled(depth);
    }
    if let Some(b) = section.upper_bound {
        p = p.with_upper_bound(b);
    }
    Ok(p)
}

fn build_atmosphere(section: &AtmosphereSection, base: &Path, final_time: f64) -> Result<AtmosphereSeries, CliError> {
    let series = match &section.spec {
        AtmosphereSpec::Zero => AtmosphereSeries::Zero,
        AtmosphereSpec::Ramp { rate } => AtmosphereSeries::Ramp { rate: *rate },
        AtmosphereSpec::Sinusoid { amplitude, frequency } => {
            AtmosphereSeries::Sinusoid { amplitude: *amplitude, frequency: *frequency }
        }
        AtmosphereSpec::Samples { times, values, file } => {
            let (mut t, v) = inline_or_file(times, values, file, base, "t")?;
            if section.physical_time {
                t.iter_mut().for_each(|x| *x /= final_time);
            }
            AtmosphereSeries::Samples { times: t, values: v }
        }
    };
    series.validate()?;
    Ok(series)
}

fn inline_or_file(
    xs: &Option<Vec<f64>>,
    ys: &Option<Vec<f64>>,
    file: &Option<PathBuf>,
    base: &Path,
    what: &str,
) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    match (xs, ys, file) {
        (Some(x), Some(y), None) => Ok((x.clone(), y.clone())),
        (None, None, Some(f)) => read_two_columns(&base.join(f)),
        _ => Err(CliError::Input(format!("a table needs either `{what}` and `values`, or `file`"))),
    }
}

/// Two numeric columns with a header row.
pub fn read_two_columns(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Input(format!("{}:{line}: {e}", path.display()))
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |k: usize| -> Result<f64, CliError> {
            let raw = record.get(k).unwrap_or("");
            raw.parse::<f64>()
                .map_err(|e| CliError::Input(format!("{}:{line}: column {}: `{raw}`: {e}", path.display(), k + 1)))
        };
        xs.push(field(0)?);
        ys.push(field(1)?);
    }
    Ok((xs, ys))
}
