//! Declarative run configuration.
//!
//! The file is TOML with the sections `[model]`, `[grid]`, `[scheme]`, `[noise]`,
//! `[experiment]` and `[output]`. Every value is validated before any compute and
//! errors name the offending key as `section.key`.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::integrators::{SchemeKind, SchemeSpec};
use crate::models::ModelSpec;
use crate::noise::CovarianceSpec;
use crate::spectral::{SpectralField, TorusGrid};

/// A configuration problem, tied to the key that caused it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    TransportHeat,
    AdditiveHeat,
    ReactionDiffusion,
    PorousMedium,
    Burgers,
}

impl ModelKind {
    fn parse(s: &str) -> CResult<Self> {
        Ok(match s {
            "transport_heat" => Self::TransportHeat,
            "additive_heat" => Self::AdditiveHeat,
            "reaction_diffusion" => Self::ReactionDiffusion,
            "porous_medium" => Self::PorousMedium,
            "burgers" => Self::Burgers,
            other => {
                return Err(ConfigError::new(
                    "model.kind",
                    format!("unknown model '{other}'"),
                ))
            }
        })
    }
}

/// Initial data for simulations and the Burgers remainder.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// `amplitude · cos(2πx) + mean`.
    Cos { amplitude: f64, mean: f64 },
    /// `amplitude · sin(2πx) + mean`.
    Sin { amplitude: f64, mean: f64 },
    /// Explicit `(k, re, im)` amplitudes.
    Modes(Vec<(i64, f64, f64)>),
}

impl InitialCondition {
    pub fn build(&self, grid: TorusGrid) -> crate::Result<SpectralField> {
        let c = Complex64::new;
        match self {
            Self::Zero => Ok(SpectralField::zeros(grid)),
            Self::Cos { amplitude, mean } => {
                SpectralField::from_modes(grid, &[(0, c(*mean, 0.0)), (1, c(0.5 * amplitude, 0.0))])
            }
            Self::Sin { amplitude, mean } => {
                SpectralField::from_modes(grid, &[(0, c(*mean, 0.0)), (1, c(0.0, -0.5 * amplitude))])
            }
            Self::Modes(entries) => {
                let e: Vec<(i64, Complex64)> =
                    entries.iter().map(|&(k, re, im)| (k, c(re, im))).collect();
                SpectralField::from_modes(grid, &e)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub t_end: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    pub checks: Vec<String>,
    pub tolerance: f64,
    pub initial: InitialCondition,
    pub spectra: bool,
    /// Transport coercivity exponent and ensemble size for hypothesis checks.
    pub alpha: f64,
    pub ensemble: usize,
    /// Times for the Wiener covariance check.
    pub s: f64,
    pub t: f64,
    /// Burgers working parameters.
    pub p: f64,
    pub picard_tol: f64,
    pub picard_maxit: usize,
    pub window: f64,
    pub v_alpha: f64,
    /// Regularity pipeline.
    pub alphas: Vec<f64>,
    pub lag_min_exp: i32,
    pub lag_max_exp: i32,
    pub base_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model_kind: ModelKind,
    pub model: ModelSpec,
    pub grid: TorusGrid,
    pub scheme: Option<SchemeSpec>,
    pub noise: CovarianceSpec,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
    /// SHA-256 of the canonical semantic content (everything except `[output]`).
    pub hash: String,
}

pub const KNOWN_CHECKS: &[&str] = &[
    "mass_conservation",
    "energy_identity",
    "gronwall",
    "ito_isometry",
    "wiener_covariance",
    "trace_identity",
    "quadratic_variation",
    "ou_variance",
    "she_increment",
    "holder_exponent",
    "ito_strat",
    "gaussian_moment",
    "coercivity",
    "monotonicity",
    "growth",
    "porous_duality",
];

const SECTIONS: &[&str] = &["model", "grid", "scheme", "noise", "experiment", "output"];

struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
}

impl<'a> Section<'a> {
    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn get(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn require(&self, key: &str) -> CResult<&'a Value> {
        if self.table.is_none() {
            return Err(ConfigError::new(self.name, "missing section"));
        }
        self.get(key)
            .ok_or_else(|| ConfigError::new(self.key(key), "missing required key"))
    }

    fn float_value(&self, key: &str, v: &Value) -> CResult<f64> {
        match v {
            Value::Float(f) => Ok(*f),
            Value::Integer(i) => Ok(*i as f64),
            _ => Err(ConfigError::new(self.key(key), "expected a number")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> CResult<f64> {
        self.get(key).map_or(Ok(default), |v| self.float_value(key, v))
    }

    fn f64_req(&self, key: &str) -> CResult<f64> {
        let v = self.require(key)?;
        self.float_value(key, v)
    }

    fn int_value(&self, key: &str, v: &Value) -> CResult<i64> {
        match v {
            Value::Integer(i) => Ok(*i),
            _ => Err(ConfigError::new(self.key(key), "expected an integer")),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> CResult<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                let i = self.int_value(key, v)?;
                usize::try_from(i)
                    .map_err(|_| ConfigError::new(self.key(key), "must be non-negative"))
            }
        }
    }

    fn usize_req(&self, key: &str) -> CResult<usize> {
        self.require(key)?;
        self.usize_or(key, 0)
    }

    fn str_or(&self, key: &str, default: &'a str) -> CResult<&'a str> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::String(s)) => Ok(s),
            Some(_) => Err(ConfigError::new(self.key(key), "expected a string")),
        }
    }

    fn str_req(&self, key: &str) -> CResult<&'a str> {
        self.require(key)?;
        self.str_or(key, "")
    }

    fn bool_or(&self, key: &str, default: bool) -> CResult<bool> {
        match self.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(ConfigError::new(self.key(key), "expected true or false")),
        }
    }

    fn f64_list(&self, key: &str) -> CResult<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| self.float_value(key, v))
                .collect::<CResult<Vec<_>>>()
                .map(Some),
            Some(_) => Err(ConfigError::new(self.key(key), "expected an array of numbers")),
        }
    }

    fn str_list(&self, key: &str) -> CResult<Vec<String>> {
        match self.get(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    _ => Err(ConfigError::new(self.key(key), "expected an array of strings")),
                })
                .collect(),
            Some(_) => Err(ConfigError::new(self.key(key), "expected an array of strings")),
        }
    }
}

fn positive(key: String, v: f64) -> CResult<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be positive, got {v}")))
    }
}

fn non_negative(key: String, v: f64) -> CResult<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::new(key, format!("must be non-negative, got {v}")))
    }
}

fn canonical_hash(root: &Table) -> String {
    let mut semantic = root.clone();
    semantic.remove("output");
    let json = serde_json::to_value(&semantic).expect("toml values serialize to json");
    let digest = Sha256::digest(json.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> CResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CResult<Self> {
        let root: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::new("config", e.message().to_string()))?;
        for key in root.keys() {
            if !SECTIONS.contains(&key.as_str()) {
                return Err(ConfigError::new(key.clone(), "unknown section"));
            }
        }
        let section = |name: &'static str| -> CResult<Section<'_>> {
            match root.get(name) {
                None => Ok(Section { name, table: None }),
                Some(Value::Table(t)) => Ok(Section {
                    name,
                    table: Some(t),
                }),
                Some(_) => Err(ConfigError::new(name, "expected a section")),
            }
        };
        let model_s = section("model")?;
        let grid_s = section("grid")?;
        let scheme_s = section("scheme")?;
        let noise_s = section("noise")?;
        let exp_s = section("experiment")?;
        let out_s = section("output")?;

        let k = grid_s.usize_req("modes")?;
        let default_points = (4 * k).max(2 * k + 1);
        let m = grid_s.usize_or("points", default_points)?;
        let grid = TorusGrid::new(k, m).map_err(|e| ConfigError::new("grid.points", e.to_string()))?;

        let model_kind = ModelKind::parse(model_s.str_req("kind")?)?;

        let noise = if model_kind == ModelKind::TransportHeat && noise_s.table.is_none() {
            CovarianceSpec::zero(grid)
        } else {
            let kind = noise_s.str_req("covariance")?;
            let spec = match kind {
                "white" => Ok(CovarianceSpec::white(grid)),
                "zero" => Ok(CovarianceSpec::zero(grid)),
                "power" => CovarianceSpec::power(grid, noise_s.f64_req("gamma")?),
                "list" => {
                    noise_s.require("eigenvalues")?;
                    let values = noise_s.f64_list("eigenvalues")?.unwrap_or_default();
                    CovarianceSpec::list(grid, &values)
                }
                other => {
                    return Err(ConfigError::new(
                        "noise.covariance",
                        format!("unknown covariance '{other}' (white, power, list, zero)"),
                    ))
                }
            };
            spec.map_err(|e| ConfigError::new("noise", e.to_string()))?
        };

        let model = match model_kind {
            ModelKind::TransportHeat => {
                let sigma = model_s
                    .f64_list("sigma")?
                    .ok_or_else(|| ConfigError::new("model.sigma", "missing required key"))?;
                ModelSpec::transport_heat(sigma)
                    .map_err(|e| ConfigError::new("model.sigma", e.to_string()))?
            }
            ModelKind::AdditiveHeat => ModelSpec::additive_heat(noise.clone())
                .map_err(|e| ConfigError::new("noise", e.to_string()))?,
            ModelKind::ReactionDiffusion => {
                let theta = model_s.f64_req("theta")?;
                let m = model_s.usize_req("m")?;
                ModelSpec::reaction_diffusion(theta, m as u32, noise.clone())
                    .map_err(|e| ConfigError::new("model.m", e.to_string()))?
            }
            ModelKind::PorousMedium => {
                let m = model_s.usize_req("m")?;
                ModelSpec::porous_medium(m as u32, noise.clone())
                    .map_err(|e| ConfigError::new("model.m", e.to_string()))?
            }
            ModelKind::Burgers => ModelSpec::burgers(noise.clone())
                .map_err(|e| ConfigError::new("noise", e.to_string()))?,
        };

        let scheme = if scheme_s.table.is_some() {
            let kind = match scheme_s.str_req("kind")? {
                "euler_maruyama" => SchemeKind::EulerMaruyama,
                "heun_stratonovich" => SchemeKind::HeunStratonovich,
                "exponential_euler" => SchemeKind::ExponentialEuler,
                "exact_ou" => SchemeKind::ExactOU,
                other => {
                    return Err(ConfigError::new(
                        "scheme.kind",
                        format!("unknown scheme '{other}'"),
                    ))
                }
            };
            let dt = positive("scheme.dt".into(), scheme_s.f64_req("dt")?)?;
            let spec = SchemeSpec::new(kind, dt)
                .map_err(|e| ConfigError::new("scheme.dt", e.to_string()))?;
            spec.supports(&model)
                .map_err(|e| ConfigError::new("scheme.kind", e.to_string()))?;
            Some(spec)
        } else {
            None
        };

        let experiment = Self::parse_experiment(&exp_s)?;
        if let Some(s) = &scheme {
            crate::integrators::step_count(experiment.t_end, s.dt)
                .map_err(|e| ConfigError::new("scheme.dt", e.to_string()))?;
        }
        experiment
            .initial
            .build(grid)
            .map_err(|e| ConfigError::new("experiment.initial", e.to_string()))?;

        let output = OutputConfig {
            dir: PathBuf::from(out_s.str_or("dir", ".")?),
            prefix: out_s.str_or("prefix", "run")?.to_string(),
        };
        if output.prefix.is_empty() || output.prefix.contains(['/', '\\']) {
            return Err(ConfigError::new("output.prefix", "must be a plain file-name prefix"));
        }

        Ok(Self {
            model_kind,
            model,
            grid,
            scheme,
            noise,
            experiment,
            output,
            hash: canonical_hash(&root),
        })
    }

    fn parse_experiment(s: &Section<'_>) -> CResult<ExperimentConfig> {
        if s.table.is_none() {
            return Err(ConfigError::new("experiment", "missing section"));
        }
        let t_end = non_negative(s.key("t_end"), s.f64_req("t_end")?)?;
        let n_paths = s.usize_or("n_paths", 1)?;
        if n_paths == 0 {
            return Err(ConfigError::new("experiment.n_paths", "must be at least 1"));
        }
        let base_seed = match s.get("base_seed") {
            None => 0,
            Some(v) => u64::try_from(s.int_value("base_seed", v)?)
                .map_err(|_| ConfigError::new("experiment.base_seed", "must be non-negative"))?,
        };
        let checks = s.str_list("checks")?;
        for c in &checks {
            if !KNOWN_CHECKS.contains(&c.as_str()) {
                return Err(ConfigError::new(
                    "experiment.checks",
                    format!("unknown check '{c}'"),
                ));
            }
        }
        let amplitude = s.f64_or("amplitude", 1.0)?;
        let mean = s.f64_or("mean", 0.0)?;
        let initial = match s.str_or("initial", "cos")? {
            "zero" => InitialCondition::Zero,
            "cos" => InitialCondition::Cos { amplitude, mean },
            "sin" => InitialCondition::Sin { amplitude, mean },
            "modes" => {
                let key = s.key("initial_modes");
                let rows = match s.get("initial_modes") {
                    Some(Value::Array(rows)) => rows,
                    _ => return Err(ConfigError::new(key, "expected an array of [k, re, im]")),
                };
                let mut entries = Vec::new();
                for row in rows {
                    let triple = match row {
                        Value::Array(t) if t.len() == 3 => t,
                        _ => return Err(ConfigError::new(key, "expected [k, re, im] triples")),
                    };
                    let k = s.int_value("initial_modes", &triple[0])?;
                    let re = s.float_value("initial_modes", &triple[1])?;
                    let im = s.float_value("initial_modes", &triple[2])?;
                    entries.push((k, re, im));
                }
                InitialCondition::Modes(entries)
            }
            other => {
                return Err(ConfigError::new(
                    "experiment.initial",
                    format!("unknown initial condition '{other}' (zero, cos, sin, modes)"),
                ))
            }
        };
        let p = s.f64_or("p", 4.0)?;
        if !(p >= 2.0) {
            return Err(ConfigError::new("experiment.p", "must be at least 2"));
        }
        let picard_maxit = s.usize_or("picard_maxit", 25)?;
        if picard_maxit == 0 {
            return Err(ConfigError::new("experiment.picard_maxit", "must be at least 1"));
        }
        let lag_min_exp = s.usize_or("lag_min_exp", 8)? as i32;
        let lag_max_exp = s.usize_or("lag_max_exp", 14)? as i32;
        if lag_max_exp <= lag_min_exp {
            return Err(ConfigError::new(
                "experiment.lag_max_exp",
                "must exceed experiment.lag_min_exp",
            ));
        }
        Ok(ExperimentConfig {
            t_end,
            n_paths,
            base_seed,
            checks,
            tolerance: positive(s.key("tolerance"), s.f64_or("tolerance", 3.0)?)?,
            initial,
            spectra: s.bool_or("spectra", false)?,
            alpha: non_negative(s.key("alpha"), s.f64_or("alpha", 0.05)?)?,
            ensemble: s.usize_or("ensemble", 1000)?,
            s: non_negative(s.key("s"), s.f64_or("s", 0.3)?)?,
            t: non_negative(s.key("t"), s.f64_or("t", 0.7)?)?,
            p,
            picard_tol: positive(s.key("picard_tol"), s.f64_or("picard_tol", 1e-10)?)?,
            picard_maxit,
            window: positive(s.key("window"), s.f64_or("window", 0.05)?)?,
            v_alpha: s.f64_or("v_alpha", 0.25)?,
            alphas: s.f64_list("alphas")?.unwrap_or_else(|| vec![-0.25, 0.25]),
            lag_min_exp,
            lag_max_exp,
            base_time: positive(s.key("base_time"), s.f64_or("base_time", 0.5)?)?,
        })
    }

    /// The scheme section, required by path-producing commands.
    pub fn require_scheme(&self) -> CResult<SchemeSpec> {
        self.scheme
            .ok_or_else(|| ConfigError::new("scheme", "missing section"))
    }

    pub fn initial_state(&self) -> SpectralField {
        self.experiment
            .initial
            .build(self.grid)
            .expect("validated at parse time")
    }

    /// The sum of the transport coefficients, if the model is TransportHeat.
    pub fn sigma(&self) -> Option<f64> {
        match &self.model {
            ModelSpec::TransportHeat { sigma } => Some(sigma.iter().sum()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[model]
kind = "transport_heat"
sigma = [1.0]

[grid]
modes = 8

[scheme]
kind = "heun_stratonovich"
dt = 1e-3

[experiment]
t_end = 0.01
"#;

    #[test]
    fn minimal_config_parses() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.grid.n_points(), 32);
        assert_eq!(c.sigma(), Some(1.0));
        assert_eq!(c.experiment.n_paths, 1);
        assert_eq!(c.output.prefix, "run");
    }

    #[test]
    fn missing_dt_names_the_key() {
        let text = MINIMAL.replace("dt = 1e-3\n", "");
        let e = RunConfig::parse(&text).unwrap_err();
        assert_eq!(e.key, "scheme.dt");
        assert!(e.to_string().contains("scheme.dt"));
    }

    #[test]
    fn validation_errors() {
        let cases = [
            (MINIMAL.replace("modes = 8", "modes = 8\npoints = 10"), "grid.points"),
            (MINIMAL.replace("transport_heat", "navier_stokes"), "model.kind"),
            (MINIMAL.replace("sigma = [1.0]", "sigma = [-1.0]"), "model.sigma"),
            (MINIMAL.replace("dt = 1e-3", "dt = -1.0"), "scheme.dt"),
            (MINIMAL.replace("dt = 1e-3", "dt = 3e-3"), "scheme.dt"),
            (MINIMAL.replace("heun_stratonovich", "exact_ou"), "scheme.kind"),
            (MINIMAL.replace("t_end = 0.01", "t_end = 0.01\nchecks = [\"bogus\"]"), "experiment.checks"),
            (MINIMAL.replace("[grid]", "[grid]\n[extra]"), "extra"),
            (MINIMAL.replace("modes = 8", "modes = \"eight\""), "grid.modes"),
        ];
        for (text, key) in cases {
            assert_eq!(RunConfig::parse(&text).unwrap_err().key, key, "{text}");
        }
    }

    #[test]
    fn additive_models_need_noise() {
        let text = MINIMAL
            .replace("transport_heat", "additive_heat")
            .replace("heun_stratonovich", "exact_ou");
        assert_eq!(RunConfig::parse(&text).unwrap_err().key, "noise");
        let text = format!("{text}\n[noise]\ncovariance = \"power\"\ngamma = 1.0\n");
        let c = RunConfig::parse(&text).unwrap();
        assert_eq!(c.noise.eigenvalue(1), 0.5);
    }

    #[test]
    fn hash_tracks_semantics_only() {
        let a = RunConfig::parse(MINIMAL).unwrap();
        let reformatted = MINIMAL.replace("dt = 1e-3", "dt    =   0.001");
        assert_eq!(a.hash, RunConfig::parse(&reformatted).unwrap().hash);
        let with_output = format!("{MINIMAL}\n[output]\ndir = \"elsewhere\"\n");
        assert_eq!(a.hash, RunConfig::parse(&with_output).unwrap().hash);
        let changed = MINIMAL.replace("sigma = [1.0]", "sigma = [1.5]");
        assert_ne!(a.hash, RunConfig::parse(&changed).unwrap().hash);
    }
}
