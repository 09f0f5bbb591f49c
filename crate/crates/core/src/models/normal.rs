use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{DataDerivatives, DataSpace, Model};
use crate::error::{Error, Result};
use crate::estimator::SignSplit;

/// iid `N(μ, σ²)` observations. With a known variance θ = (μ); otherwise
/// θ = (μ, log σ²). Each component has a `N(0, prior_variance)` prior.
#[derive(Debug, Clone)]
pub struct NormalModel {
    y: Vec<f64>,
    known_variance: Option<f64>,
    prior_variance: f64,
}

impl NormalModel {
    pub fn new(y: Vec<f64>, known_variance: Option<f64>, prior_variance: f64) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if let Some(v) = known_variance {
            if !(v > 0.0) {
                return Err(Error::InvalidParams(format!("variance {v} must be positive")));
            }
        }
        if !(prior_variance > 0.0) {
            return Err(Error::InvalidParams(format!(
                "prior variance {prior_variance} must be positive"
            )));
        }
        Ok(Self {
            y,
            known_variance,
            prior_variance,
        })
    }

    pub fn generate<R: Rng + ?Sized>(
        mean: f64,
        variance: f64,
        n: usize,
        known_variance: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyPopulation);
        }
        let dist = Normal::new(mean, variance.sqrt()).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let y = (0..n).map(|_| dist.sample(rng)).collect();
        Self::new(y, known_variance.then_some(variance), 10.0)
    }

    pub fn observations(&self) -> &[f64] {
        &self.y
    }

    pub fn known_variance(&self) -> Option<f64> {
        self.known_variance
    }

    pub fn prior_variance(&self) -> f64 {
        self.prior_variance
    }

    fn variance(&self, theta: &[f64]) -> f64 {
        self.known_variance.unwrap_or_else(|| theta[1].exp())
    }

    fn split(&self, theta: &[f64], y: f64) -> SignSplit {
        let s2 = self.variance(theta);
        let r = y - theta[0];
        SignSplit {
            shifted_contribution: -r * r / (2.0 * s2),
            shift: -0.5 * (2.0 * std::f64::consts::PI * s2).ln(),
        }
    }
}

impl Model for NormalModel {
    fn name(&self) -> &str {
        "normal"
    }

    fn population_size(&self) -> usize {
        self.y.len()
    }

    fn dim(&self) -> usize {
        if self.known_variance.is_some() {
            1
        } else {
            2
        }
    }

    fn param_names(&self) -> Vec<String> {
        if self.known_variance.is_some() {
            vec!["mu".into()]
        } else {
            vec!["mu".into(), "log_sigma2".into()]
        }
    }

    fn contribution(&self, theta: &[f64], k: usize) -> f64 {
        let s = self.split(theta, self.y[k]);
        s.shifted_contribution + s.shift
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let v = self.prior_variance;
        let norm = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
        theta.iter().map(|t| norm - t * t / (2.0 * v)).sum()
    }

    fn sign_split(&self, theta: &[f64], k: usize) -> Option<SignSplit> {
        Some(self.split(theta, self.y[k]))
    }

    fn data_space(&self) -> Option<&dyn DataSpace> {
        Some(self)
    }
}

/// The log-density is quadratic in `y`, so second-order expansions are exact.
impl DataSpace for NormalModel {
    fn data_dim(&self) -> usize {
        1
    }

    fn point(&self, k: usize) -> Vec<f64> {
        vec![self.y[k]]
    }

    fn loglik_at(&self, theta: &[f64], _category: usize, z: &[f64]) -> f64 {
        let s = self.split(theta, z[0]);
        s.shifted_contribution + s.shift
    }

    fn derivatives(&self, theta: &[f64], _category: usize, z: &[f64]) -> Result<DataDerivatives> {
        let s2 = self.variance(theta);
        Ok(DataDerivatives {
            value: self.loglik_at(theta, 0, z),
            gradient: DVector::from_element(1, -(z[0] - theta[0]) / s2),
            hessian: DMatrix::from_element(1, 1, -1.0 / s2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_matches_closed_form() {
        let m = NormalModel::new(vec![1.5, -0.3], None, 10.0).unwrap();
        let theta = [0.5, (2.0f64).ln()];
        let s = m.sign_split(&theta, 0).unwrap();
        assert!((s.shifted_contribution + 0.25).abs() < 1e-15);
        assert!((s.shift + 0.5 * (4.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn observation_at_mean_splits_to_zero() {
        let m = NormalModel::new(vec![0.7], Some(1.0), 10.0).unwrap();
        assert_eq!(m.sign_split(&[0.7], 0).unwrap().shifted_contribution, 0.0);
    }

    #[test]
    fn split_sums_to_loglik() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = NormalModel::generate(1.0, 2.0, 500, false, &mut rng).unwrap();
        let theta = [0.8, 0.4];
        let total: f64 = (0..500)
            .map(|k| {
                let s = m.sign_split(&theta, k).unwrap();
                s.shifted_contribution + s.shift
            })
            .sum();
        // monolithic form: -n/2 log(2πσ²) - Σ(y-μ)²/(2σ²)
        let s2 = theta[1].exp();
        let ss: f64 = m.observations().iter().map(|y| (y - theta[0]).powi(2)).sum();
        let reference = -250.0 * (2.0 * std::f64::consts::PI * s2).ln() - ss / (2.0 * s2);
        assert!((total - reference).abs() <= 1e-12 * reference.abs());
        assert!((m.full_loglik(&theta) - reference).abs() <= 1e-12 * reference.abs());
    }
}
