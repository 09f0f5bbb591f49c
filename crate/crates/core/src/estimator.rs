//! Subsample estimators of a log-likelihood total.
//!
//! Every estimator here is a with-replacement difference estimator: a known
//! control-variate total `q` plus a Hansen-Hurwitz estimate of the residual
//! total `Σ (l_k - q_k)`. With `q_k = 0` it reduces to plain Hansen-Hurwitz,
//! with `p_k = 1/n` to the simple-random-sampling difference estimator.
//! All quantities stay on the log scale.

use serde::{Deserialize, Serialize};

use crate::control_variates::PreparedVariates;
use crate::error::{Error, Result};
use crate::models::Model;
use crate::sampling::Subsample;

/// One sampled element: its exact contribution, its control variate and the
/// probability with which it was drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term {
    pub index: usize,
    pub contribution: f64,
    pub variate: f64,
    pub probability: f64,
}

impl Term {
    /// `(l_k - q_k) / p_k`, the per-draw expansion term.
    pub fn expanded_residual(&self) -> f64 {
        (self.contribution - self.variate) / self.probability
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikEstimate {
    /// Estimated log-likelihood (nats).
    pub value: f64,
    /// Estimated variance of `value` (nats²).
    pub variance: f64,
    pub subsample_size: usize,
    /// Control-variate total folded into `value`.
    pub known_total: f64,
    /// Exact contribution evaluations plus the variate provider's declared cost.
    pub cost: u64,
}

/// Additive split `l_k = l*_k + d` where every `l*_k` shares a sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignSplit {
    pub shifted_contribution: f64,
    pub shift: f64,
}

fn check_probability(p: f64, index: usize) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) || !p.is_finite() {
        return Err(Error::InvalidDesign(format!(
            "inclusion probability {p} for element {index} is outside (0, 1]"
        )));
    }
    Ok(())
}

/// Unbiased with-replacement variance estimate of the mean of `terms`:
/// `Σ (ζ_i - ζ̄)² / (m (m - 1))`.
pub fn estimate_variance(terms: &[f64]) -> Result<f64> {
    let m = terms.len();
    if m < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: m });
    }
    // the rounded mean of identical terms need not equal the terms themselves
    if terms.iter().all(|&z| z == terms[0]) {
        return Ok(0.0);
    }
    let mean = terms.iter().sum::<f64>() / m as f64;
    let ss: f64 = terms.iter().map(|z| (z - mean) * (z - mean)).sum();
    Ok(ss / (m as f64 * (m as f64 - 1.0)))
}

/// Builds an estimate from already evaluated terms.
///
/// `known_total` is `q = Σ_k q_k` over the whole sampling frame and
/// `variate_cost` the number of evaluations the variate provider declared.
pub fn estimate_from_terms(
    terms: &[Term],
    known_total: f64,
    variate_cost: u64,
) -> Result<LogLikEstimate> {
    let m = terms.len();
    if m < 2 {
        return Err(Error::InsufficientSample { needed: 2, got: m });
    }
    for t in terms {
        check_probability(t.probability, t.index)?;
    }
    let zeta: Vec<f64> = terms.iter().map(Term::expanded_residual).collect();
    let residual_total = zeta.iter().sum::<f64>() / m as f64;
    let variance = estimate_variance(&zeta)?;
    Ok(LogLikEstimate {
        value: known_total + residual_total,
        variance,
        subsample_size: m,
        known_total,
        cost: m as u64 + variate_cost,
    })
}

/// Estimates `l(θ)` over the sampling frame from the draws in `subsample`.
pub fn estimate_loglik(
    model: &dyn Model,
    theta: &[f64],
    subsample: &Subsample,
    variates: &dyn PreparedVariates,
) -> Result<LogLikEstimate> {
    let indices = subsample.indices();
    let probs = subsample.probabilities();
    if indices.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            got: indices.len(),
        });
    }
    let mut terms = Vec::with_capacity(indices.len());
    for (&k, &p) in indices.iter().zip(probs) {
        check_probability(p, k)?;
        terms.push(Term {
            index: k,
            contribution: model.contribution(theta, k),
            variate: variates.variate(k),
            probability: p,
        });
    }
    estimate_from_terms(&terms, variates.total(), variates.cost())
}

/// Log of the bias-corrected likelihood estimate, `l̂_m - σ̂²/2`.
pub fn bias_corrected_log_likelihood(est: &LogLikEstimate) -> f64 {
    est.value - 0.5 * est.variance
}

/// Subsample size expected to bring the estimator variance down to `v_max`,
/// `ceil(m σ̂² / v_max)`, capped at the frame size `population`.
pub fn adaptive_sample_size(est: &LogLikEstimate, v_max: f64, population: usize) -> Result<usize> {
    if !(v_max > 0.0) || !v_max.is_finite() {
        return Err(Error::InvalidTolerance(format!(
            "v_max must be positive and finite, got {v_max}"
        )));
    }
    let raw = (est.subsample_size as f64 * est.variance / v_max).ceil();
    let m = if raw.is_finite() { raw.max(2.0) as usize } else { usize::MAX };
    Ok(m.min(population.max(2)))
}

pub fn sign_split(model: &dyn Model, theta: &[f64], k: usize) -> Result<SignSplit> {
    model.sign_split(theta, k).ok_or_else(|| {
        Error::Unsupported(format!("model `{}` declares no sign split", model.name()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(index: usize, l: f64, q: f64, p: f64) -> Term {
        Term {
            index,
            contribution: l,
            variate: q,
            probability: p,
        }
    }

    /// Exhaustive oracle over every with-replacement tuple of size `m`.
    /// Returns (E[value], E[variance estimate], E[(value - Σ l)²]).
    fn enumerate(l: &[f64], q: &[f64], p: &[f64], m: usize) -> (f64, f64, f64) {
        let n = l.len();
        let q_total: f64 = q.iter().sum();
        let true_total: f64 = l.iter().sum();
        let mut tuple = vec![0usize; m];
        let mut e_value = 0.0;
        let mut e_var = 0.0;
        let mut e_sq = 0.0;
        loop {
            let weight: f64 = tuple.iter().map(|&k| p[k]).product();
            let terms: Vec<Term> = tuple.iter().map(|&k| term(k, l[k], q[k], p[k])).collect();
            let est = estimate_from_terms(&terms, q_total, 0).unwrap();
            e_value += weight * est.value;
            e_sq += weight * (est.value - true_total) * (est.value - true_total);
            e_var += weight * est.variance;
            let mut pos = 0;
            loop {
                if pos == m {
                    return (e_value, e_var, e_sq);
                }
                tuple[pos] += 1;
                if tuple[pos] < n {
                    break;
                }
                tuple[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn homogeneous_population_has_zero_variance() {
        let n = 50;
        let c = -1.3;
        let terms: Vec<Term> = (0..7).map(|i| term(i, c, 0.0, 1.0 / n as f64)).collect();
        let est = estimate_from_terms(&terms, 0.0, 0).unwrap();
        assert!((est.value - n as f64 * c).abs() < 1e-12);
        assert_eq!(est.variance, 0.0);
    }

    #[test]
    fn perfect_variates_recover_total() {
        let l = [-0.5, -2.0, -0.1, -3.3];
        let total: f64 = l.iter().sum();
        let terms: Vec<Term> = [0, 2, 2].iter().map(|&k| term(k, l[k], l[k], 0.25)).collect();
        let est = estimate_from_terms(&terms, total, 4).unwrap();
        assert_eq!(est.value, total);
        assert_eq!(est.variance, 0.0);
        assert_eq!(est.cost, 3 + 4);
    }

    #[test]
    fn three_element_srs_enumeration() {
        let (mean, e_var, var) = enumerate(&[1.0, 2.0, 3.0], &[0.0; 3], &[1.0 / 3.0; 3], 2);
        assert!((mean - 6.0).abs() < 1e-12);
        assert!((var - 3.0).abs() < 1e-12);
        assert!((e_var - 3.0).abs() < 1e-12);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(estimate_variance(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert!((estimate_variance(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(
            estimate_variance(&[1.0]),
            Err(Error::InsufficientSample { needed: 2, got: 1 })
        );
    }

    #[test]
    fn rejects_bad_probabilities() {
        let terms = [term(0, 1.0, 0.0, 0.0), term(1, 1.0, 0.0, 0.5)];
        assert!(matches!(
            estimate_from_terms(&terms, 0.0, 0),
            Err(Error::InvalidDesign(_))
        ));
        let terms = [term(0, 1.0, 0.0, -0.1), term(1, 1.0, 0.0, 0.5)];
        assert!(matches!(
            estimate_from_terms(&terms, 0.0, 0),
            Err(Error::InvalidDesign(_))
        ));
    }

    #[test]
    fn bias_correction_subtracts_half_variance() {
        let est = LogLikEstimate {
            value: -10.0,
            variance: 0.0,
            subsample_size: 5,
            known_total: 0.0,
            cost: 5,
        };
        assert_eq!(bias_corrected_log_likelihood(&est), -10.0);
        let est = LogLikEstimate { variance: 3.0, ..est };
        assert_eq!(bias_corrected_log_likelihood(&est), -11.5);
    }

    #[test]
    fn adaptive_size_examples() {
        let est = LogLikEstimate {
            value: 0.0,
            variance: 1.5,
            subsample_size: 100,
            known_total: 0.0,
            cost: 100,
        };
        assert_eq!(adaptive_sample_size(&est, 1.5, 10_000).unwrap(), 100);
        assert_eq!(adaptive_sample_size(&est, 0.75, 10_000).unwrap(), 200);
        assert_eq!(adaptive_sample_size(&est, 0.0001, 10_000).unwrap(), 10_000);
        assert!(matches!(
            adaptive_sample_size(&est, 0.0, 10),
            Err(Error::InvalidTolerance(_))
        ));
    }

    #[test]
    fn better_variates_do_not_increase_srs_variance() {
        let l = [-0.3, -1.7, -0.9, -2.4, -0.05];
        let good = [-0.35, -1.6, -0.95, -2.3, -0.06];
        let poor = [-0.5, -1.2, -1.3, -2.0, -0.3];
        let p = [0.2; 5];
        let (_, _, v_good) = enumerate(&l, &good, &p, 2);
        let (_, _, v_poor) = enumerate(&l, &poor, &p, 2);
        assert!(v_good <= v_poor);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn population() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, usize)> {
            (1usize..=6, 1usize..=3).prop_flat_map(|(n, m)| {
                (
                    prop::collection::vec(-5.0f64..0.0, n),
                    prop::collection::vec(-5.0f64..0.0, n),
                    prop::collection::vec(0.05f64..1.0, n),
                    Just(m.max(2)),
                )
            })
        }

        proptest! {
            #[test]
            fn exhaustive_unbiasedness((l, q, w, m) in population()) {
                let wsum: f64 = w.iter().sum();
                let p: Vec<f64> = w.iter().map(|x| x / wsum).collect();
                let (mean, e_var, var) = enumerate(&l, &q, &p, m);
                let total: f64 = l.iter().sum();
                prop_assert!((mean - total).abs() <= 1e-12 * total.abs().max(1.0));
                prop_assert!((e_var - var).abs() <= 1e-12 * var.abs().max(1.0));
            }
        }
    }
}
