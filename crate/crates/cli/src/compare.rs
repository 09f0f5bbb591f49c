use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use subsample_mcmc::diagnostics::{compare_columns, efficiency_report, EfficiencyReport};

use crate::error::CliError;
use crate::output::{json_bytes, write_atomic, Outputs};
use crate::run::{dataset_hash_of, execute, load_run_spec, RunArtifacts};
use crate::spec::{self, CompareSpec, RunSpec};

#[derive(Serialize)]
struct EfficiencyRow<'a> {
    run: usize,
    label: &'a str,
    param: &'a str,
    inefficiency: f64,
    effective_sample_size: f64,
    cost: f64,
    effective_draws: f64,
    red: f64,
    rif: f64,
}

#[derive(Serialize)]
struct SamplingRow<'a> {
    run: usize,
    label: &'a str,
    mean_sampling_fraction: f64,
    acceptance_rate: f64,
    sampling_evaluations: u64,
    cost: f64,
    flagged_iterations: usize,
}

#[derive(Serialize)]
struct PosteriorRow<'a> {
    run: usize,
    label: &'a str,
    param: String,
    mean_difference: f64,
    sd_ratio: f64,
    ks_statistic: f64,
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn label(spec: &RunSpec, i: usize) -> String {
    spec.label.clone().unwrap_or_else(|| format!("run-{i}"))
}

pub fn cmd_compare(
    path: &Path,
    overrides: &[String],
    out_dir: &mut Option<PathBuf>,
) -> Result<serde_json::Value, CliError> {
    let mut cmp: CompareSpec = spec::load(path, overrides)?;
    let base = spec::spec_dir(path);
    cmp.output.directory = spec::anchor(&base, &cmp.output.directory);
    let dir = cmp.output.directory.clone();
    *out_dir = Some(dir.clone());
    if cmp.runs.len() < 2 {
        return Err(CliError::Validation("compare needs at least two runs".into()));
    }
    if cmp.baseline >= cmp.runs.len() {
        return Err(CliError::Validation(format!(
            "baseline index {} out of range for {} runs",
            cmp.baseline,
            cmp.runs.len()
        )));
    }

    let mut members = Vec::with_capacity(cmp.runs.len());
    for (i, run) in cmp.runs.iter().enumerate() {
        let mut member = load_run_spec(&spec::anchor(&base, run), &[])?;
        member.output.directory = dir.join(format!("run-{i}"));
        members.push(member);
    }
    let hashes = members.iter().map(dataset_hash_of).collect::<Result<Vec<_>, _>>()?;
    if hashes.iter().any(|h| h != &hashes[0]) {
        return Err(CliError::Validation("mismatched datasets across compared runs".into()));
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cmp.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::Validation(e.to_string()))?;
    let results: Vec<RunArtifacts> = pool.install(|| {
        members
            .into_par_iter()
            .map(|m| execute(m, None))
            .collect::<Result<Vec<_>, _>>()
    })?;

    let baseline = &results[cmp.baseline];
    let reports: Vec<EfficiencyReport> = results
        .iter()
        .map(|r| efficiency_report(&r.trace, r.trace.sampling_cost(), Some(&baseline.report)))
        .collect::<Result<_, _>>()?;
    let labels: Vec<String> = results.iter().enumerate().map(|(i, r)| label(&r.spec, i)).collect();

    let mut efficiency = Vec::new();
    let mut sampling = Vec::new();
    let mut posteriors = Vec::new();
    let mut densities = Vec::new();
    let base_cols: Vec<Vec<f64>> = (0..baseline.trace.dim()).map(|j| baseline.trace.column(j)).collect();
    let mut comparisons = Vec::new();
    for (i, (r, rep)) in results.iter().zip(&reports).enumerate() {
        let rel = rep.relative.as_ref().expect("baseline supplied");
        for (j, name) in rep.param_names.iter().enumerate() {
            efficiency.push(EfficiencyRow {
                run: i,
                label: &labels[i],
                param: name,
                inefficiency: rep.inefficiency[j],
                effective_sample_size: rep.effective_sample_size[j],
                cost: rep.cost,
                effective_draws: rep.effective_draws[j],
                red: rel.red[j],
                rif: rel.rif[j],
            });
        }
        sampling.push(SamplingRow {
            run: i,
            label: &labels[i],
            mean_sampling_fraction: rep.mean_sampling_fraction,
            acceptance_rate: rep.acceptance_rate,
            sampling_evaluations: r.trace.sampling_evaluations(),
            cost: rep.cost,
            flagged_iterations: r.trace.records.iter().filter(|s| s.flagged).count(),
        });
        let cols: Vec<Vec<f64>> = (0..r.trace.dim()).map(|j| r.trace.column(j)).collect();
        let c = compare_columns(&r.trace.param_names, &cols, &base_cols, cmp.output.density_bins);
        for p in &c.parameters {
            posteriors.push(PosteriorRow {
                run: i,
                label: &labels[i],
                param: p.param.clone(),
                mean_difference: p.mean_difference,
                sd_ratio: p.sd_ratio,
                ks_statistic: p.ks_statistic,
            });
        }
        let mut bytes = Vec::new();
        c.write_density_csv(&mut bytes)?;
        densities.push((i, bytes));
        comparisons.push(c);
    }

    let mut outputs = Outputs::default();
    outputs.write(&dir.join("efficiency.csv"), &csv_bytes(&efficiency)?)?;
    outputs.write(&dir.join("sampling.csv"), &csv_bytes(&sampling)?)?;
    outputs.write(&dir.join("posteriors.csv"), &csv_bytes(&posteriors)?)?;
    for (i, bytes) in &densities {
        outputs.write(&dir.join(format!("densities-{i}.csv")), bytes)?;
    }
    let summary = json!({
        "baseline": cmp.baseline,
        "labels": labels,
        "efficiency": reports,
        "posteriors": comparisons.iter().map(|c| &c.parameters).collect::<Vec<_>>(),
    });
    outputs.write(&dir.join("comparison.json"), &json_bytes(&summary))?;
    let manifest = json!({
        "tool": { "name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION") },
        "command": "compare",
        "status": "completed",
        "spec": cmp,
        "dataset": { "sha256": hashes[0] },
        "members": results.iter().map(|r| &r.spec).collect::<Vec<_>>(),
        "outputs": outputs.files,
    });
    write_atomic(&dir.join("manifest.json"), &json_bytes(&manifest))?;
    Ok(json!({
        "status": "completed",
        "output": dir,
        "red": reports.iter().map(|r| r.relative.as_ref().map(|x| x.red.clone())).collect::<Vec<_>>(),
    }))
}
