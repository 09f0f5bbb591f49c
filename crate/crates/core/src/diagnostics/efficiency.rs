use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::engine::Trace;
use crate::error::{Error, Result};

const MIN_DRAWS: usize = 100;

/// Biased autocorrelations `ρ̂_0 .. ρ̂_{N-1}` via zero-padded FFT.
pub fn autocorrelations(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: n });
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .map(|v| Complex::new(v - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(len)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) {
        return Err(Error::DegenerateChain("constant column".into()));
    }
    Ok(buf[..n].iter().map(|c| c.re / c0).collect())
}

/// `1 + 2 Σ ρ̂_l`, truncated at the first pair `ρ̂_{2k} + ρ̂_{2k+1} ≤ 0`.
pub fn inefficiency_factor(x: &[f64]) -> Result<f64> {
    if x.len() < MIN_DRAWS {
        return Err(Error::InsufficientSample {
            needed: MIN_DRAWS,
            got: x.len(),
        });
    }
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return Err(Error::DegenerateChain("constant column".into()));
    }
    let rho = autocorrelations(x)?;
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < rho.len() {
        let pair = rho[2 * k] + rho[2 * k + 1];
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    // Σ_k Γ_k counts ρ̂_0 = 1 once; IF = 2 Σ Γ_k - 1
    Ok(2.0 * sum - 1.0)
}

/// Monte Carlo standard error of a chain mean.
pub fn monte_carlo_standard_error(x: &[f64]) -> Result<f64> {
    let inefficiency = inefficiency_factor(x)?;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((var * inefficiency.max(1.0) / n).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeEfficiency {
    /// `ED / ED_baseline` per parameter.
    pub red: Vec<f64>,
    /// `IF / IF_baseline` per parameter.
    pub rif: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub param_names: Vec<String>,
    pub draws: usize,
    pub inefficiency: Vec<f64>,
    pub effective_sample_size: Vec<f64>,
    pub cost: f64,
    pub effective_draws: Vec<f64>,
    pub mean_sampling_fraction: f64,
    pub acceptance_rate: f64,
    pub relative: Option<RelativeEfficiency>,
}

/// Report from raw post-burn-in columns. ESS is `N / max(IF, 1)` so it never
/// exceeds the number of draws.
pub fn efficiency_from_columns(
    param_names: Vec<String>,
    columns: &[Vec<f64>],
    cost: f64,
    mean_sampling_fraction: f64,
    acceptance_rate: f64,
    baseline: Option<&EfficiencyReport>,
) -> Result<EfficiencyReport> {
    if !(cost > 0.0) || !cost.is_finite() {
        return Err(Error::InvalidCost(cost));
    }
    let draws = columns.first().map_or(0, Vec::len);
    let inefficiency = columns
        .iter()
        .map(|c| inefficiency_factor(c))
        .collect::<Result<Vec<_>>>()?;
    let effective_sample_size: Vec<f64> = inefficiency.iter().map(|f| draws as f64 / f.max(1.0)).collect();
    let effective_draws: Vec<f64> = effective_sample_size.iter().map(|e| e / cost).collect();
    let relative = match baseline {
        None => None,
        Some(b) => {
            if b.inefficiency.len() != inefficiency.len() {
                return Err(Error::InvalidConfig(format!(
                    "baseline has {} parameters, report has {}",
                    b.inefficiency.len(),
                    inefficiency.len()
                )));
            }
            Some(RelativeEfficiency {
                red: effective_draws.iter().zip(&b.effective_draws).map(|(a, b)| a / b).collect(),
                rif: inefficiency.iter().zip(&b.inefficiency).map(|(a, b)| a / b).collect(),
            })
        }
    };
    Ok(EfficiencyReport {
        param_names,
        draws,
        inefficiency,
        effective_sample_size,
        cost,
        effective_draws,
        mean_sampling_fraction,
        acceptance_rate,
        relative,
    })
}

/// Report over a trace's post-burn-in draws at the given cost.
pub fn efficiency_report(trace: &Trace, cost: f64, baseline: Option<&EfficiencyReport>) -> Result<EfficiencyReport> {
    let columns: Vec<Vec<f64>> = (0..trace.dim()).map(|j| trace.column(j)).collect();
    efficiency_from_columns(
        trace.param_names.clone(),
        &columns,
        cost,
        trace.mean_sampling_fraction(),
        trace.acceptance_rate(),
        baseline,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(rho: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let innov = (1.0 - rho * rho).sqrt();
        let mut x: f64 = StandardNormal.sample(&mut rng);
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                x = rho * x + innov * e;
                x
            })
            .collect()
    }

    /// Autocorrelations by the textbook double loop.
    fn direct(x: &[f64], lags: usize) -> Vec<f64> {
        let n = x.len();
        let m = x.iter().sum::<f64>() / n as f64;
        let c = |l: usize| (0..n - l).map(|t| (x[t] - m) * (x[t + l] - m)).sum::<f64>();
        let c0 = c(0);
        (0..lags).map(|l| c(l) / c0).collect()
    }

    #[test]
    fn fft_matches_direct() {
        let x = ar1(0.7, 500, 1);
        let fast = autocorrelations(&x).unwrap();
        for (a, b) in fast.iter().zip(direct(&x, 50)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn white_noise() {
        let f = inefficiency_factor(&ar1(0.0, 100_000, 2)).unwrap();
        assert!((0.9..=1.1).contains(&f), "{f}");
    }

    #[test]
    fn ar1_closed_form() {
        let f = inefficiency_factor(&ar1(0.5, 100_000, 3)).unwrap();
        assert!((f / 3.0 - 1.0).abs() < 0.1, "{f}");
        let f = inefficiency_factor(&ar1(0.9, 100_000, 4)).unwrap();
        assert!((f / 19.0 - 1.0).abs() < 0.15, "{f}");
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(inefficiency_factor(&[2.0; 500]), Err(Error::DegenerateChain(_))));
        assert!(matches!(
            inefficiency_factor(&[1.0, 2.0]),
            Err(Error::InsufficientSample { .. })
        ));
    }

    fn report(columns: &[Vec<f64>], cost: f64, base: Option<&EfficiencyReport>) -> EfficiencyReport {
        efficiency_from_columns(vec!["a".into(), "b".into()], columns, cost, 0.05, 0.3, base).unwrap()
    }

    #[test]
    fn relative_metrics() {
        let cols = vec![ar1(0.5, 5000, 5), ar1(0.8, 5000, 6)];
        let base = report(&cols, 10.0, None);
        let same = report(&cols, 10.0, Some(&base));
        let rel = same.relative.unwrap();
        assert!(rel.red.iter().chain(&rel.rif).all(|&v| v == 1.0));
        let doubled = report(&cols, 20.0, None);
        for (a, b) in doubled.effective_draws.iter().zip(&base.effective_draws) {
            assert_eq!(*a, b / 2.0);
        }
        assert!(matches!(
            efficiency_from_columns(vec![], &cols, 0.0, 0.0, 0.0, None),
            Err(Error::InvalidCost(_))
        ));
    }

    #[test]
    fn reciprocity_and_ess_bound() {
        let a_cols = vec![ar1(0.3, 3000, 7), ar1(-0.4, 3000, 8)];
        let b_cols = vec![ar1(0.9, 3000, 9), ar1(0.1, 3000, 10)];
        let a = report(&a_cols, 3.0, None);
        let b = report(&b_cols, 7.0, None);
        for r in [&a, &b] {
            assert!(r.effective_sample_size.iter().all(|&e| e <= r.draws as f64));
        }
        let ab = report(&a_cols, 3.0, Some(&b)).relative.unwrap();
        let ba = report(&b_cols, 7.0, Some(&a)).relative.unwrap();
        for j in 0..2 {
            assert!((ab.red[j] * ba.red[j] - 1.0).abs() < 1e-14);
            assert!((ab.rif[j] * ba.rif[j] - 1.0).abs() < 1e-14);
        }
    }
}
