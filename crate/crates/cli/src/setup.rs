//! Dataset loading, simulation, and control-variate construction.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use subsample_mcmc::control_variates::sidecar::{read_sidecar, write_sidecar, ClusterCache, SidecarKey};
use subsample_mcmc::control_variates::{
    ControlVariates, NumericVariates, PerfectVariates, SurfaceConfig, SurfaceVariates, TaylorVariates, ZeroVariates,
};
use subsample_mcmc::models::data::{
    read_logistic, read_observations, read_panels, read_series, write_logistic, write_observations, write_panels,
    write_series,
};
use subsample_mcmc::models::{Ar1Model, Ar1Parameterization, LogisticModel, Model, NormalModel, Population, WeibullModel};

use crate::error::CliError;
use crate::output::{sha256_bytes, write_atomic};
use crate::spec::{EstimatorSpec, GeneratorSpec, ModelKind, ModelSpec, VariateKind};

pub struct LoadedModel {
    pub model: Box<dyn Model>,
    pub dataset_hash: [u8; 32],
    /// Source file; `None` when the data were simulated from the spec.
    pub dataset_path: Option<PathBuf>,
}

/// Simulates a dataset and returns its CSV encoding.
pub fn generate_csv(spec: &ModelSpec, g: &GeneratorSpec) -> Result<Vec<u8>, CliError> {
    g.validate(spec.kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed);
    let mut out = Vec::new();
    match spec.kind {
        ModelKind::Logistic => {
            let model = LogisticModel::generate(&g.theta, g.n, &mut rng)?;
            write_logistic(&model, &mut out)?;
        }
        ModelKind::Ar1 => {
            let param = spec.parameterization.unwrap_or(Ar1Parameterization::M1);
            let model = Ar1Model::generate(&g.theta, param, spec.nu.unwrap_or(5.0), g.n, &mut rng)?;
            write_series(model.series(), &mut out)?;
        }
        ModelKind::Weibull => {
            let model = WeibullModel::generate(&g.theta, g.n, g.max_periods.unwrap_or(10), &mut rng)?;
            write_panels(model.panels(), &mut out)?;
        }
        ModelKind::Normal => {
            let model =
                NormalModel::generate(g.theta[0], g.theta[1], g.n, spec.known_variance.is_some(), &mut rng)?;
            write_observations(model.observations(), &mut out)?;
        }
    }
    Ok(out)
}

pub fn model_from_csv(spec: &ModelSpec, bytes: &[u8]) -> Result<Box<dyn Model>, CliError> {
    Ok(match spec.kind {
        ModelKind::Logistic => Box::new(read_logistic(bytes)?),
        ModelKind::Ar1 => Box::new(Ar1Model::new(
            read_series(bytes)?,
            spec.parameterization.unwrap_or(Ar1Parameterization::M1),
            spec.nu.unwrap_or(5.0),
        )?),
        ModelKind::Weibull => Box::new(WeibullModel::new(read_panels(bytes)?)?.with_integration(
            spec.integration_step.unwrap_or(WeibullModel::DEFAULT_STEP),
            spec.proxy_step.unwrap_or(WeibullModel::DEFAULT_PROXY_STEP),
            spec.halfwidth.unwrap_or(WeibullModel::DEFAULT_HALFWIDTH),
        )?),
        ModelKind::Normal => Box::new(NormalModel::new(
            read_observations(bytes)?,
            spec.known_variance,
            spec.prior_variance.unwrap_or(10.0),
        )?),
    })
}

/// The dataset's bytes, read from disk or simulated.
pub fn dataset_bytes(spec: &ModelSpec) -> Result<Vec<u8>, CliError> {
    match (&spec.dataset, &spec.generate) {
        (Some(path), _) => {
            std::fs::read(path).map_err(|e| CliError::Io(format!("cannot read dataset {}: {e}", path.display())))
        }
        (None, Some(g)) => generate_csv(spec, g),
        (None, None) => Err(CliError::Validation("model: `dataset` or `generate` is required".into())),
    }
}

pub fn load_model(spec: &ModelSpec) -> Result<LoadedModel, CliError> {
    let bytes = dataset_bytes(spec)?;
    Ok(LoadedModel {
        model: model_from_csv(spec, &bytes)?,
        dataset_hash: sha256_bytes(&bytes),
        dataset_path: spec.dataset.clone(),
    })
}

/// Where the clustering of a dataset is cached.
pub fn sidecar_path(loaded: &LoadedModel, output_dir: &Path) -> PathBuf {
    match &loaded.dataset_path {
        Some(p) => {
            let mut name = p.file_name().unwrap_or_default().to_os_string();
            name.push(".clusters");
            p.with_file_name(name)
        }
        None => output_dir.join("clusters.bin"),
    }
}

fn taylor_with_cache(
    model: &dyn Model,
    population: &Population,
    epsilon: f64,
    key: SidecarKey,
    path: &Path,
) -> Result<TaylorVariates, CliError> {
    if let Ok(file) = std::fs::File::open(path) {
        if let Ok(Some(cache)) = read_sidecar(std::io::BufReader::new(file), &key) {
            if cache.clusters.assignments.len() == population.frame.len() {
                return Ok(TaylorVariates::from_clustering(
                    model,
                    population,
                    cache.standardizer,
                    cache.clusters,
                )?);
            }
        }
    }
    let taylor = TaylorVariates::build(model, population, epsilon)?;
    let cache = ClusterCache {
        standardizer: taylor.standardizer().clone(),
        clusters: taylor.clusters().clone(),
        summaries: taylor.summaries().to_vec(),
    };
    let mut bytes = Vec::new();
    write_sidecar(&mut bytes, &key, &cache)?;
    // the cache is an optimization; a read-only dataset directory is fine
    let _ = write_atomic(path, &bytes);
    Ok(taylor)
}

pub fn build_variates(
    kind: VariateKind,
    loaded: &LoadedModel,
    estimator: &EstimatorSpec,
    theta_hat: &[f64],
    sidecar: &Path,
    seed: u64,
) -> Result<Box<dyn ControlVariates>, CliError> {
    let model = loaded.model.as_ref();
    let population = Population::of(model);
    Ok(match kind {
        VariateKind::Taylor => {
            let key = SidecarKey {
                dataset_hash: loaded.dataset_hash,
                epsilon: estimator.epsilon,
            };
            Box::new(taylor_with_cache(model, &population, estimator.epsilon, key, sidecar)?)
        }
        VariateKind::Surface => {
            let s = &estimator.surface;
            let config = SurfaceConfig {
                method: s.method,
                knots: s.knots,
                grid: s.grid.clone(),
                residual_adjustment: s.residual_adjustment,
                seed,
            };
            Box::new(SurfaceVariates::build(model, &population, theta_hat, s.training_size, &config)?)
        }
        VariateKind::Perfect => Box::new(PerfectVariates::new(population)),
        VariateKind::Numeric => Box::new(NumericVariates::new(model, population)?),
        VariateKind::Zero => Box::new(ZeroVariates),
    })
}
