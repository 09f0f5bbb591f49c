use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::CliError;
use crate::output::{json_bytes, sha256_hex, write_atomic};
use crate::setup::generate_csv;
use crate::spec::{self, GenerateSpec};

pub fn cmd_generate(
    path: &Path,
    overrides: &[String],
    out_dir: &mut Option<PathBuf>,
) -> Result<serde_json::Value, CliError> {
    let mut spec: GenerateSpec = spec::load(path, overrides)?;
    let base = spec::spec_dir(path);
    spec.output = spec::anchor(&base, &spec.output);
    *out_dir = spec.output.parent().map(Path::to_path_buf);
    let g = spec
        .model
        .generate
        .clone()
        .ok_or_else(|| CliError::Validation("model.generate is required".into()))?;
    if spec.model.dataset.is_some() {
        return Err(CliError::Validation("model.dataset makes no sense when generating".into()));
    }
    spec.model.resolve(&base)?;
    let csv = generate_csv(&spec.model, &g)?;
    let digest = sha256_hex(&csv);
    write_atomic(&spec.output, &csv)?;

    let mut name = spec.output.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    let provenance = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "model": spec.model,
        "seed": g.seed,
        "true_theta": g.theta,
        "n": g.n,
        "sha256": digest,
    });
    write_atomic(&spec.output.with_file_name(name), &json_bytes(&provenance))?;
    Ok(json!({ "status": "completed", "output": spec.output, "sha256": digest }))
}
