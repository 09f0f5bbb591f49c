use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use subsample_mcmc::diagnostics::error_scaling_study;
use subsample_mcmc::engine::find_mode_and_curvature;

use crate::error::CliError;
use crate::output::{json_bytes, write_atomic, Outputs};
use crate::setup::{build_variates, load_model, sidecar_path};
use crate::spec::{self, ScalingSpec};

pub fn cmd_scaling(
    path: &Path,
    overrides: &[String],
    out_dir: &mut Option<PathBuf>,
) -> Result<serde_json::Value, CliError> {
    let mut spec: ScalingSpec = spec::load(path, overrides)?;
    let base = spec::spec_dir(path);
    spec.model.resolve(&base)?;
    spec.estimator.validate()?;
    spec.output.directory = spec::anchor(&base, &spec.output.directory);
    let dir = spec.output.directory.clone();
    *out_dir = Some(dir.clone());
    if spec.study.m_grid.is_empty() {
        return Err(CliError::Validation("study.m_grid is empty".into()));
    }

    let loaded = load_model(&spec.model)?;
    let model = loaded.model.as_ref();
    let d = model.dim();
    let (mode, sigma) = find_mode_and_curvature(model, &vec![0.0; d])?;
    let thetas = match &spec.study.thetas {
        Some(t) => {
            if t.iter().any(|v| v.len() != d) {
                return Err(CliError::Validation(format!("study.thetas entries need {d} values")));
            }
            t.clone()
        }
        None => spec
            .study
            .sd_offsets
            .iter()
            .map(|k| (0..d).map(|j| mode[j] + k * sigma[(j, j)].sqrt()).collect())
            .collect(),
    };
    let sidecar = sidecar_path(&loaded, &dir);
    let variates = build_variates(
        spec.estimator.control_variates,
        &loaded,
        &spec.estimator,
        &mode,
        &sidecar,
        spec.study.seed,
    )?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = spec.study.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Validation(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.study.seed);
    let study = pool.install(|| {
        error_scaling_study(
            model,
            variates.as_ref(),
            &thetas,
            &spec.study.m_grid,
            spec.study.replications,
            &mut rng,
        )
    })?;

    let mut outputs = Outputs::default();
    let mut csv = Vec::new();
    study.write_csv(&mut csv)?;
    outputs.write(&dir.join("scaling.csv"), &csv)?;
    let summary = json!({
        "thetas": thetas,
        "study": study,
        "nonincreasing_share": study.nonincreasing_share(),
    });
    outputs.write(&dir.join("scaling.json"), &json_bytes(&summary))?;
    let manifest = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "command": "scaling-study",
        "status": "completed",
        "spec": spec,
        "dataset": { "path": loaded.dataset_path, "sha256": hex::encode(loaded.dataset_hash) },
        "mode": mode,
        "outputs": outputs.files,
    });
    write_atomic(&dir.join("manifest.json"), &json_bytes(&manifest))?;
    Ok(json!({
        "status": "completed",
        "output": dir,
        "slope": study.slope,
        "nonincreasing_share": study.nonincreasing_share(),
    }))
}
