use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control_variates::ControlVariates;
use crate::error::{Error, Result};
use crate::estimator::{bias_corrected_log_likelihood, estimate_loglik};
use crate::models::{Model, Population};
use crate::sampling::draw_srs;

pub const MIN_REPLICATIONS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingCell {
    pub theta_index: usize,
    pub m: usize,
    /// `|mean_r exp(log p̂_r - l) - 1|`.
    pub fractional_error: f64,
    /// Median over replications of `|exp(log p̂_r - l) - 1|`.
    pub median_abs_error: f64,
    pub mean_sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudy {
    pub replications: usize,
    pub cells: Vec<ScalingCell>,
    /// Least-squares slope of `log fractional_error` on `log m` over cells
    /// with positive error; `None` when fewer than two such cells exist.
    pub slope: Option<f64>,
    /// The same fit for `median_abs_error`.
    pub median_slope: Option<f64>,
}

impl ScalingStudy {
    /// Share of adjacent m-grid pairs (per θ) whose median error does not
    /// increase.
    pub fn nonincreasing_share(&self) -> f64 {
        self.nonincreasing_share_by(|c| c.median_abs_error)
    }

    pub fn nonincreasing_share_by(&self, error: impl Fn(&ScalingCell) -> f64) -> f64 {
        let mut pairs = 0usize;
        let mut ok = 0usize;
        for w in self.cells.windows(2) {
            if w[0].theta_index == w[1].theta_index {
                pairs += 1;
                ok += usize::from(error(&w[1]) <= error(&w[0]));
            }
        }
        if pairs == 0 {
            1.0
        } else {
            ok as f64 / pairs as f64
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.cells {
            w.serialize(c).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `log mean exp(x)` with the maximum shifted out.
pub fn log_mean_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + (x.iter().map(|v| (v - max).exp()).sum::<f64>() / x.len() as f64).ln()
}

fn slope(cells: &[ScalingCell], error: impl Fn(&ScalingCell) -> f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .map(|c| (c.m, error(c)))
        .filter(|&(_, e)| e > 0.0 && e.is_finite())
        .map(|(m, e)| ((m as f64).ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Empirical fractional error of the bias-corrected likelihood estimator
/// (DE-SRS) for every `(θ, m)` cell. Cells run in parallel, each on its own
/// stream seeded from `rng`.
pub fn error_scaling_study<R: Rng + ?Sized>(
    model: &dyn Model,
    variates: &dyn ControlVariates,
    thetas: &[Vec<f64>],
    m_grid: &[usize],
    replications: usize,
    rng: &mut R,
) -> Result<ScalingStudy> {
    if replications < MIN_REPLICATIONS {
        return Err(Error::InsufficientReplication {
            needed: MIN_REPLICATIONS,
            got: replications,
        });
    }
    if m_grid.is_empty() || thetas.is_empty() {
        return Err(Error::InvalidConfig("empty θ or m grid".into()));
    }
    if m_grid.iter().any(|&m| m < 2) {
        return Err(Error::InvalidConfig("every m must be at least 2".into()));
    }
    let population = Population::of(model);
    if population.frame.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let jobs: Vec<(usize, usize, u64)> = thetas
        .iter()
        .enumerate()
        .flat_map(|(i, _)| m_grid.iter().map(move |&m| (i, m)))
        .map(|(i, m)| (i, m, rng.random::<u64>()))
        .collect();
    let exact: Vec<f64> = thetas.iter().map(|t| population.frame_sum(model, t)).collect();
    let cells = jobs
        .par_iter()
        .map(|&(i, m, seed)| {
            let theta = &thetas[i];
            let prepared = variates.prepare(model, theta)?;
            let mut cell_rng = ChaCha8Rng::seed_from_u64(seed);
            let frame = &population.frame;
            let mut log_ratio = Vec::with_capacity(replications);
            let mut sigma2 = 0.0;
            for _ in 0..replications {
                let u = draw_srs(frame.len(), m, &mut cell_rng)?.remap(frame);
                let est = estimate_loglik(model, theta, &u, prepared.as_ref())?;
                sigma2 += est.variance;
                log_ratio.push(bias_corrected_log_likelihood(&est) - exact[i]);
            }
            let mut abs: Vec<f64> = log_ratio.iter().map(|r| r.exp_m1().abs()).collect();
            abs.sort_by(f64::total_cmp);
            let median = if replications % 2 == 1 {
                abs[replications / 2]
            } else {
                0.5 * (abs[replications / 2 - 1] + abs[replications / 2])
            };
            Ok(ScalingCell {
                theta_index: i,
                m,
                fractional_error: log_mean_exp(&log_ratio).exp_m1().abs(),
                median_abs_error: median,
                mean_sigma2: sigma2 / replications as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScalingStudy {
        replications,
        slope: slope(&cells, |c| c.fractional_error),
        median_slope: slope(&cells, |c| c.median_abs_error),
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_variates::{PerfectVariates, ZeroVariates};
    use crate::models::NormalModel;

    #[test]
    fn log_mean_exp_survives_large_values() {
        let v = log_mean_exp(&[1000.0, 1000.0 + 2f64.ln()]);
        assert!((v - (1000.0 + 1.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn perfect_variates_have_no_error() {
        let model = NormalModel::new((0..50).map(|i| i as f64 * 0.1).collect(), Some(1.0), 10.0).unwrap();
        let perfect = PerfectVariates::new(Population::of(&model));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = error_scaling_study(&model, &perfect, &[vec![0.3]], &[2, 10, 40], 100, &mut rng).unwrap();
        assert!(s.cells.iter().all(|c| c.fractional_error == 0.0));
        assert_eq!(s.slope, None);
        assert_eq!(s.median_slope, None);
    }

    #[test]
    fn homogeneous_population_full_sample() {
        let model = NormalModel::new(vec![0.7; 30], Some(1.0), 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = error_scaling_study(&model, &ZeroVariates, &[vec![0.0]], &[30], 100, &mut rng).unwrap();
        assert!(s.cells[0].fractional_error < 1e-12);
    }

    #[test]
    fn contracts() {
        let model = NormalModel::new(vec![0.0, 1.0], Some(1.0), 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(matches!(
            error_scaling_study(&model, &ZeroVariates, &[vec![0.0]], &[2], 99, &mut rng),
            Err(Error::InsufficientReplication { needed: 100, got: 99 })
        ));
        assert!(matches!(
            error_scaling_study(&model, &ZeroVariates, &[vec![0.0]], &[], 100, &mut rng),
            Err(Error::InvalidConfig(_))
        ));
    }
}
