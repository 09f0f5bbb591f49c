use rand::Rng;

use crate::control_variates::ControlVariates;
use crate::error::{Error, Result};
use crate::estimator::estimate_loglik;
use crate::models::{Model, Population};
use crate::sampling::draw_srs;

/// Smallest subsample size whose predicted fractional likelihood error
/// `exp(σ⁴ / (4 (m - 1))) - 1` is about `fractional_error`, capped at `n`.
pub fn choose_m_for_target_error(sigma2_target: f64, fractional_error: f64, n: usize) -> Result<usize> {
    if !(fractional_error > 0.0) || !fractional_error.is_finite() {
        return Err(Error::InvalidTolerance(format!(
            "fractional error must be positive, got {fractional_error}"
        )));
    }
    if !(sigma2_target >= 0.0) {
        return Err(Error::InvalidTolerance(format!(
            "variance target must be nonnegative, got {sigma2_target}"
        )));
    }
    let m = 1.0 + sigma2_target * sigma2_target / (4.0 * fractional_error.ln_1p());
    Ok((m.round() as usize).max(1).min(n.max(1)))
}

/// Predicted fractional error of the bias-corrected likelihood at `m`.
pub fn predicted_fractional_error(sigma2: f64, m: usize) -> f64 {
    (sigma2 * sigma2 / (4.0 * (m as f64 - 1.0))).exp_m1()
}

/// SRS size whose estimator variance at `theta` is about `target_sigma2`,
/// from `repeats` pilot estimates of size `pilot_m`.
pub fn calibrate_srs_size<R: Rng + ?Sized>(
    model: &dyn Model,
    population: &Population,
    variates: &dyn ControlVariates,
    theta: &[f64],
    target_sigma2: f64,
    pilot_m: usize,
    repeats: usize,
    rng: &mut R,
) -> Result<usize> {
    if !(target_sigma2 > 0.0) {
        return Err(Error::InvalidTolerance(format!(
            "variance target must be positive, got {target_sigma2}"
        )));
    }
    let prepared = variates.prepare(model, theta)?;
    let frame = &population.frame;
    let mut total = 0.0;
    for _ in 0..repeats.max(1) {
        let u = draw_srs(frame.len(), pilot_m.max(2), rng)?.remap(frame);
        total += estimate_loglik(model, theta, &u, prepared.as_ref())?.variance;
    }
    let sigma2 = total / repeats.max(1) as f64;
    let m = (pilot_m.max(2) as f64 * sigma2 / target_sigma2).ceil();
    Ok((m as usize).clamp(2, frame.len().max(2)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_setting() {
        assert_eq!(choose_m_for_target_error(7.0, 0.01, 1_000_000).unwrap(), 1232);
        let e = predicted_fractional_error(7.0, 1232);
        assert!((e - 0.01).abs() < 1e-5);
    }

    #[test]
    fn no_variance_needs_one_draw() {
        assert_eq!(choose_m_for_target_error(0.0, 0.01, 100).unwrap(), 1);
    }

    #[test]
    fn capped_at_population() {
        assert_eq!(choose_m_for_target_error(10.0, 1e-4, 500).unwrap(), 500);
        assert!(choose_m_for_target_error(1.0, 0.0, 10).is_err());
    }
}
