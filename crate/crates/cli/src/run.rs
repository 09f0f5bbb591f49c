use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use subsample_mcmc::diagnostics::{efficiency_report, EfficiencyReport};
use subsample_mcmc::engine::{
    calibrate_srs_size, find_mode_and_curvature, run_chain, ChainSetup, EngineConfig, EstimatorKind, Trace,
};
use subsample_mcmc::models::{CostModel, Population};
use subsample_mcmc::sampling::CorrelationParams;

use crate::error::CliError;
use crate::output::{json_bytes, sha256_hex, Outputs};
use crate::setup::{build_variates, load_model, sidecar_path};
use crate::spec::{self, RunSpec};

/// Extra seed offset for calibration and surface fitting, kept apart from the
/// chain's own streams.
const AUXILIARY_SEED: u64 = 0x5eed_ca1b;

pub struct RunArtifacts {
    pub spec: RunSpec,
    pub trace: Trace,
    pub report: EfficiencyReport,
}

#[derive(Serialize)]
struct Summary<'a> {
    efficiency: &'a EfficiencyReport,
    cost_model: CostModel,
    sampling_evaluations: u64,
    subsample_size: usize,
    frame_size: usize,
    flagged_iterations: usize,
    adaptation_rounds: usize,
    final_scale: f64,
    burn_in_seconds: f64,
    sampling_seconds: f64,
}

fn summary_json(trace: &Trace, report: &EfficiencyReport, m: usize, frame: usize) -> serde_json::Value {
    serde_json::to_value(Summary {
        efficiency: report,
        cost_model: trace.cost_model,
        sampling_evaluations: trace.sampling_evaluations(),
        subsample_size: m,
        frame_size: frame,
        flagged_iterations: trace.records.iter().filter(|r| r.flagged).count(),
        adaptation_rounds: trace.records.iter().map(|r| r.adaptation_rounds).sum(),
        final_scale: trace.final_scale,
        burn_in_seconds: trace.burn_in_seconds,
        sampling_seconds: trace.sampling_seconds,
    })
    .expect("serializable")
}

/// Dataset hash recorded in a manifest, if `path` is one.
fn manifest_dataset_hash(path: &Path) -> Option<String> {
    if path.extension()? != "json" {
        return None;
    }
    let text = std::fs::read_to_string(path).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v["dataset"]["sha256"].as_str().map(str::to_string)
}

pub fn load_run_spec(path: &Path, overrides: &[String]) -> Result<RunSpec, CliError> {
    let mut spec: RunSpec = spec::load(path, overrides)?;
    spec.resolve(&spec::spec_dir(path))?;
    Ok(spec)
}

pub fn cmd_run(path: &Path, overrides: &[String], out_dir: &mut Option<PathBuf>) -> Result<serde_json::Value, CliError> {
    let spec = load_run_spec(path, overrides)?;
    *out_dir = Some(spec.output.directory.clone());
    let expected = manifest_dataset_hash(path);
    let artifacts = execute(spec, expected.as_deref())?;
    Ok(json!({
        "status": "completed",
        "output": artifacts.spec.output.directory,
        "acceptance_rate": artifacts.report.acceptance_rate,
        "mean_sampling_fraction": artifacts.report.mean_sampling_fraction,
        "inefficiency": artifacts.report.inefficiency,
    }))
}

/// Runs one resolved specification and writes its trace, report and manifest.
pub fn execute(mut spec: RunSpec, expected_dataset: Option<&str>) -> Result<RunArtifacts, CliError> {
    let dir = spec.output.directory.clone();
    let loaded = load_model(&spec.model)?;
    let dataset_sha256 = hex::encode(loaded.dataset_hash);
    if let Some(expected) = expected_dataset {
        if expected != dataset_sha256 {
            return Err(CliError::Validation(format!(
                "dataset hash {dataset_sha256} does not match the manifest's {expected}"
            )));
        }
    }
    let model = loaded.model.as_ref();
    let d = model.dim();
    let init = spec.engine.initial_theta.clone().unwrap_or_else(|| vec![0.0; d]);
    if init.len() != d {
        return Err(CliError::Validation(format!("engine.initial_theta needs {d} values")));
    }
    let (mode, sigma) = find_mode_and_curvature(model, &init)?;

    let est = spec.estimator.clone();
    let aux_seed = spec.engine.seed ^ AUXILIARY_SEED;
    let sidecar = sidecar_path(&loaded, &dir);
    let variates = build_variates(est.control_variates, &loaded, &est, &mode, &sidecar, aux_seed)?;
    let weights = match est.kind {
        EstimatorKind::HhPps => Some(build_variates(est.pps_weights, &loaded, &est, &mode, &sidecar, aux_seed)?),
        _ => None,
    };

    let population = Population::of(model);
    let frame = population.frame.len();
    // a fraction is of the whole population, matching the reported f = m/n
    let n = model.population_size() as f64;
    let mut m = est
        .subsample_size
        .unwrap_or_else(|| ((est.sampling_fraction.unwrap_or(0.05) * n).round() as usize).min(frame))
        .max(2);
    if est.calibrate && est.kind == EstimatorKind::DeSrs {
        let mut rng = ChaCha8Rng::seed_from_u64(aux_seed);
        m = calibrate_srs_size(model, &population, variates.as_ref(), &mode, est.target_sigma2, m, 100, &mut rng)?;
    }
    let fraction = m as f64 / frame.max(1) as f64;
    let correlation = match (est.kappa, est.phi) {
        (Some(k), _) => Some(CorrelationParams::from_kappa(k, fraction)?),
        (_, Some(p)) => Some(CorrelationParams::from_phi(p, fraction)?),
        _ => None,
    };
    spec.estimator.subsample_size = Some(m);
    spec.estimator.sampling_fraction = None;
    spec.estimator.calibrate = false;

    let config = EngineConfig {
        iterations: spec.engine.iterations,
        burn_in_fraction: spec.engine.burn_in_fraction,
        proposal: spec.engine.proposal,
        estimator: est.kind,
        subsample_size: m,
        omega: est.omega,
        correlation,
        v_max: est.v_max,
        max_adaptation_rounds: est.max_adaptation_rounds,
        target_sigma2: est.target_sigma2,
        target_acceptance: spec.engine.target_acceptance,
        initial_scale: spec.engine.initial_scale,
        adaptation_batch: spec.engine.adaptation_batch,
        imh_dof: spec.engine.imh_dof,
        seed: spec.engine.seed,
    };
    let setup = ChainSetup {
        model,
        variates: variates.as_ref(),
        weights: weights.as_deref(),
        theta_start: mode.clone(),
        theta_star: mode.clone(),
        sigma_star: sigma.clone(),
    };

    let mut outputs = Outputs::default();
    let manifest = |status: &str, outputs: &Outputs, error: Option<serde_json::Value>| {
        json!({
            "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
            "command": "run",
            "status": status,
            "spec": spec,
            "dataset": { "path": loaded.dataset_path, "sha256": dataset_sha256 },
            "engine": config,
            "mode": mode,
            "proposal_covariance": (0..d).map(|i| (0..d).map(|j| sigma[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "outputs": outputs.files,
            "error": error,
        })
    };
    let (trace, failure) = match run_chain(setup, config.clone()) {
        Ok(trace) => (trace, None),
        Err(abort) => (*abort.trace, Some(abort.error)),
    };
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    outputs.write(&dir.join("trace.csv"), &csv)?;

    if let Some(error) = failure {
        let err = CliError::Aborted {
            completed: trace.len(),
            source: error,
        };
        outputs.write(&dir.join("error.json"), &json_bytes(&err.to_json()))?;
        let m = manifest("aborted", &outputs, Some(err.to_json()));
        crate::output::write_atomic(&dir.join("manifest.json"), &json_bytes(&m))?;
        return Err(err);
    }

    let cost = trace.sampling_cost();
    let report = efficiency_report(&trace, cost, None)?;
    let summary = summary_json(&trace, &report, m, frame);
    outputs.write(&dir.join("report.json"), &json_bytes(&summary))?;
    let m_json = manifest("completed", &outputs, None);
    crate::output::write_atomic(&dir.join("manifest.json"), &json_bytes(&m_json))?;
    Ok(RunArtifacts {
        spec,
        trace,
        report,
    })
}

/// Hash of the dataset a specification refers to, without building the model.
pub fn dataset_hash_of(spec: &RunSpec) -> Result<String, CliError> {
    Ok(sha256_hex(&crate::setup::dataset_bytes(&spec.model)?))
}
