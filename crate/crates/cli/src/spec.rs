//! Declarative run, comparison, scaling-study and generator specifications.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use subsample_mcmc::control_variates::SurfaceMethod;
use subsample_mcmc::engine::{EstimatorKind, ProposalKind};
use subsample_mcmc::models::{Ar1Parameterization, WeibullModel};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    Ar1,
    Weibull,
    Normal,
}

/// Parameters for simulating a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    /// Observations (subjects for the Weibull model).
    pub n: usize,
    /// True parameter vector; for the normal model `(mean, variance)`.
    pub theta: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Weibull: longest follow-up in periods.
    #[serde(default)]
    pub max_periods: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub generate: Option<GeneratorSpec>,
    #[serde(default)]
    pub parameterization: Option<Ar1Parameterization>,
    #[serde(default)]
    pub nu: Option<f64>,
    /// Normal model: fixed observation variance; absent means it is estimated.
    #[serde(default)]
    pub known_variance: Option<f64>,
    #[serde(default)]
    pub prior_variance: Option<f64>,
    #[serde(default)]
    pub integration_step: Option<f64>,
    #[serde(default)]
    pub proxy_step: Option<f64>,
    #[serde(default)]
    pub halfwidth: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariateKind {
    Taylor,
    Surface,
    Perfect,
    Numeric,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSpec {
    pub method: SurfaceMethod,
    pub knots: usize,
    pub grid: Vec<f64>,
    pub residual_adjustment: bool,
    pub training_size: usize,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        let d = subsample_mcmc::control_variates::SurfaceConfig::default();
        Self {
            method: d.method,
            knots: d.knots,
            grid: d.grid,
            residual_adjustment: d.residual_adjustment,
            training_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub control_variates: VariateKind,
    /// Proxy behind PPS weights.
    pub pps_weights: VariateKind,
    pub epsilon: f64,
    pub surface: SurfaceSpec,
    pub subsample_size: Option<usize>,
    /// `m / n`; used when `subsample_size` is absent.
    pub sampling_fraction: Option<f64>,
    pub v_max: Option<f64>,
    pub max_adaptation_rounds: usize,
    pub omega: f64,
    pub kappa: Option<f64>,
    pub phi: Option<f64>,
    pub target_sigma2: f64,
    /// Choose `m` at the posterior mode so the variance is about `target_sigma2`.
    pub calibrate: bool,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::DeSrs,
            control_variates: VariateKind::Taylor,
            pps_weights: VariateKind::Numeric,
            epsilon: 0.5,
            surface: SurfaceSpec::default(),
            subsample_size: None,
            sampling_fraction: None,
            v_max: None,
            max_adaptation_rounds: 10,
            omega: 1.0,
            kappa: None,
            phi: None,
            target_sigma2: 1.0,
            calibrate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineSpec {
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub proposal: ProposalKind,
    pub target_acceptance: f64,
    pub initial_scale: Option<f64>,
    pub adaptation_batch: usize,
    pub imh_dof: f64,
    /// Starting point of the mode search.
    pub initial_theta: Option<Vec<f64>>,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for EngineSpec {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in_fraction: 0.1,
            proposal: ProposalKind::Rwm,
            target_acceptance: 0.15,
            initial_scale: None,
            adaptation_batch: 50,
            imh_dof: 10.0,
            initial_theta: None,
            seed: 0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub directory: PathBuf,
    pub density_bins: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            density_bins: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    #[serde(default)]
    pub label: Option<String>,
    pub model: ModelSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub engine: EngineSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSpec {
    /// Member run specifications, relative to this file.
    pub runs: Vec<PathBuf>,
    #[serde(default)]
    pub baseline: usize,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySpec {
    /// Explicit parameter values; when absent, `mode + k·sd` for each offset.
    pub thetas: Option<Vec<Vec<f64>>>,
    pub sd_offsets: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for StudySpec {
    fn default() -> Self {
        Self {
            thetas: None,
            sd_offsets: vec![0.0],
            m_grid: Vec::new(),
            replications: 10_000,
            seed: 0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub model: ModelSpec,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub study: StudySpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSpec {
    pub model: ModelSpec,
    /// Dataset CSV to write; provenance goes next to it as `<file>.json`.
    pub output: PathBuf,
}

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Validation(message.into())
}

/// Parses `raw` as a TOML value, falling back to a bare string.
fn parse_literal(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("parsed key")).unwrap_or(Value::Null),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value` overrides to a JSON tree.
pub fn apply_overrides(tree: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (path, raw) = item
            .split_once('=')
            .ok_or_else(|| invalid(format!("override `{item}` is not of the form key=value")))?;
        let keys: Vec<&str> = path.trim().split('.').collect();
        let mut node = &mut *tree;
        for (i, key) in keys.iter().enumerate() {
            let map = node
                .as_object_mut()
                .ok_or_else(|| invalid(format!("override `{path}`: `{key}` is not inside a table")))?;
            if i + 1 == keys.len() {
                map.insert(key.to_string(), parse_literal(raw.trim()));
                break;
            }
            node = map
                .entry(key.to_string())
                .or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Reads a TOML specification, or the `spec` entry of a JSON manifest.
pub fn load_tree(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut manifest: Value =
            serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        return manifest
            .get_mut("spec")
            .map(Value::take)
            .ok_or_else(|| invalid(format!("{} has no `spec` entry", path.display())));
    }
    let table: toml::Table = toml::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    serde_json::to_value(table).map_err(|e| invalid(e.to_string()))
}

pub fn load<T: DeserializeOwned>(path: &Path, overrides: &[String]) -> Result<T, CliError> {
    let mut tree = load_tree(path)?;
    apply_overrides(&mut tree, overrides)?;
    serde_json::from_value(tree).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

/// Makes `path` absolute against `base` (the specification's directory).
pub fn anchor(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn spec_dir(path: &Path) -> PathBuf {
    let dir = path.parent().unwrap_or(Path::new("."));
    let dir = if dir.as_os_str().is_empty() { Path::new(".") } else { dir };
    std::path::absolute(dir).unwrap_or_else(|_| dir.to_path_buf())
}

impl ModelSpec {
    /// Fills every default that applies to this model kind.
    pub fn resolve(&mut self, base: &Path) -> Result<(), CliError> {
        match (&self.dataset, &self.generate) {
            (Some(_), Some(_)) => return Err(invalid("model: give either `dataset` or `generate`, not both")),
            (None, None) => return Err(invalid("model: `dataset` or `generate` is required")),
            _ => {}
        }
        if let Some(d) = &self.dataset {
            self.dataset = Some(anchor(base, d));
        }
        if let Some(g) = &self.generate {
            g.validate(self.kind)?;
        }
        self.prior_variance.get_or_insert(10.0);
        match self.kind {
            ModelKind::Ar1 => {
                self.parameterization.get_or_insert(Ar1Parameterization::M1);
                self.nu.get_or_insert(5.0);
            }
            ModelKind::Weibull => {
                self.integration_step.get_or_insert(WeibullModel::DEFAULT_STEP);
                self.proxy_step.get_or_insert(WeibullModel::DEFAULT_PROXY_STEP);
                self.halfwidth.get_or_insert(WeibullModel::DEFAULT_HALFWIDTH);
            }
            ModelKind::Logistic | ModelKind::Normal => {}
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0) {
                return Err(invalid(format!("model.nu must be positive, got {nu}")));
            }
        }
        Ok(())
    }
}

impl GeneratorSpec {
    pub fn validate(&self, kind: ModelKind) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(invalid("generate.n must be positive"));
        }
        let expected = match kind {
            ModelKind::Ar1 | ModelKind::Normal => Some(2),
            ModelKind::Weibull => Some(5),
            ModelKind::Logistic => None,
        };
        if let Some(len) = expected {
            if self.theta.len() != len {
                return Err(invalid(format!(
                    "generate.theta needs {len} values for this model, got {}",
                    self.theta.len()
                )));
            }
        }
        if self.theta.is_empty() {
            return Err(invalid("generate.theta is empty"));
        }
        Ok(())
    }
}

impl EstimatorSpec {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.subsample_size.is_some() && self.sampling_fraction.is_some() {
            return Err(invalid("estimator: give `subsample_size` or `sampling_fraction`, not both"));
        }
        if let Some(f) = self.sampling_fraction {
            if !(f > 0.0 && f < 1.0) {
                return Err(invalid(format!("estimator.sampling_fraction {f} outside (0, 1)")));
            }
        }
        if self.kappa.is_some() && self.phi.is_some() {
            return Err(invalid("estimator: give `kappa` or `phi`, not both"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid(format!("estimator.epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.target_sigma2 > 0.0) {
            return Err(invalid("estimator.target_sigma2 must be positive"));
        }
        Ok(())
    }
}

impl RunSpec {
    pub fn resolve(&mut self, base: &Path) -> Result<(), CliError> {
        self.model.resolve(base)?;
        self.estimator.validate()?;
        self.output.directory = anchor(base, &self.output.directory);
        if self.engine.iterations == 0 {
            return Err(invalid("engine.iterations must be positive"));
        }
        Ok(())
    }
}
