use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::Trace;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterComparison {
    pub param: String,
    /// `(mean - mean_baseline) / sd_baseline`.
    pub mean_difference: f64,
    /// `sd / sd_baseline`.
    pub sd_ratio: f64,
    pub ks_statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub param: String,
    pub left: f64,
    pub right: f64,
    pub density: f64,
    pub baseline_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorComparison {
    pub parameters: Vec<ParameterComparison>,
    pub densities: Vec<DensityBin>,
}

impl PosteriorComparison {
    pub fn write_density_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for bin in &self.densities {
            w.serialize(bin).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, var.sqrt())
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let sorted = |x: &[f64]| {
        let mut v = x.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

fn density(x: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &v in x {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    let scale = 1.0 / (x.len() as f64 * width);
    counts.into_iter().map(|c| c as f64 * scale).collect()
}

/// Compares post-burn-in columns against a baseline, parameter by parameter.
pub fn compare_columns(
    names: &[String],
    columns: &[Vec<f64>],
    baseline: &[Vec<f64>],
    bins: usize,
) -> PosteriorComparison {
    let bins = bins.max(1);
    let mut parameters = Vec::new();
    let mut densities = Vec::new();
    for ((name, a), b) in names.iter().zip(columns).zip(baseline) {
        let (ma, sa) = mean_sd(a);
        let (mb, sb) = mean_sd(b);
        let (mean_difference, sd_ratio) = if sb > 0.0 {
            ((ma - mb) / sb, sa / sb)
        } else if ma == mb && sa == sb {
            (0.0, 1.0)
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        parameters.push(ParameterComparison {
            param: name.clone(),
            mean_difference,
            sd_ratio,
            ks_statistic: ks_statistic(a, b),
        });
        let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
        let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo.is_finite() && hi.is_finite()) {
            continue;
        }
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let da = density(a, lo, width, bins);
        let db = density(b, lo, width, bins);
        for k in 0..bins {
            densities.push(DensityBin {
                param: name.clone(),
                left: lo + k as f64 * width,
                right: lo + (k + 1) as f64 * width,
                density: da[k],
                baseline_density: db[k],
            });
        }
    }
    PosteriorComparison { parameters, densities }
}

/// Compares `trace` against `baseline` over their post-burn-in draws.
pub fn compare_posteriors(trace: &Trace, baseline: &Trace) -> PosteriorComparison {
    let cols = |t: &Trace| (0..t.dim()).map(|j| t.column(j)).collect::<Vec<_>>();
    compare_columns(&trace.param_names, &cols(trace), &cols(baseline), 50)
}
