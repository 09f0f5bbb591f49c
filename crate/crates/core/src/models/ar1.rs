use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StudentT};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{DataDerivatives, DataSpace, Model};
use crate::error::{Error, Result};
use crate::estimator::SignSplit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ar1Parameterization {
    /// `y_t = β₀ + β₁ y_{t-1} + ε_t`, θ = (β₀, β₁).
    M1,
    /// Steady state: `y_t = μ + ρ (y_{t-1} - μ) + ε_t`, θ = (μ, ρ).
    M2,
}

/// Lag window `(y_t, y_{t-1})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArWindow {
    pub current: f64,
    pub lagged: f64,
}

/// AR(1) with Student-t errors and a `U(-5, 5) × U(0, 1)` prior.
#[derive(Debug, Clone)]
pub struct Ar1Model {
    series: Vec<f64>,
    parameterization: Ar1Parameterization,
    nu: f64,
    log_norm: f64,
}

pub fn student_t_log_norm(nu: f64) -> f64 {
    ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln()
}

fn residual(theta: &[f64], w: ArWindow, parameterization: Ar1Parameterization) -> f64 {
    match parameterization {
        Ar1Parameterization::M1 => w.current - theta[0] - theta[1] * w.lagged,
        Ar1Parameterization::M2 => w.current - theta[0] - theta[1] * (w.lagged - theta[0]),
    }
}

/// Student-t(ν) log-density of the window residual.
pub fn ar1_contribution(
    theta: &[f64],
    window: ArWindow,
    parameterization: Ar1Parameterization,
    nu: f64,
) -> f64 {
    let e = residual(theta, window, parameterization);
    student_t_log_norm(nu) - 0.5 * (nu + 1.0) * (e * e / nu).ln_1p()
}

impl Ar1Model {
    pub fn new(series: Vec<f64>, parameterization: Ar1Parameterization, nu: f64) -> Result<Self> {
        if series.len() < 2 {
            return Err(Error::InvalidParams(
                "an AR(1) series needs at least two observations".into(),
            ));
        }
        if !(nu > 0.0) {
            return Err(Error::InvalidParams(format!("degrees of freedom {nu} must be positive")));
        }
        Ok(Self {
            series,
            parameterization,
            nu,
            log_norm: student_t_log_norm(nu),
        })
    }

    /// Simulates `n` observations started at the stationary mean.
    pub fn generate<R: Rng + ?Sized>(
        theta: &[f64],
        parameterization: Ar1Parameterization,
        nu: f64,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams("need at least two observations".into()));
        }
        let (mean, persistence) = match parameterization {
            Ar1Parameterization::M1 => (theta[0] / (1.0 - theta[1]), theta[1]),
            Ar1Parameterization::M2 => (theta[0], theta[1]),
        };
        if persistence.abs() >= 1.0 {
            return Err(Error::InvalidParams(format!(
                "persistence {persistence} is not stationary"
            )));
        }
        let noise = StudentT::new(nu).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut series = Vec::with_capacity(n);
        series.push(mean);
        for t in 1..n {
            let prev = series[t - 1];
            series.push(mean + persistence * (prev - mean) + noise.sample(rng));
        }
        Self::new(series, parameterization, nu)
    }

    pub fn series(&self) -> &[f64] {
        &self.series
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn parameterization(&self) -> Ar1Parameterization {
        self.parameterization
    }

    pub fn window(&self, k: usize) -> ArWindow {
        ArWindow {
            current: self.series[k + 1],
            lagged: self.series[k],
        }
    }

    fn slope(&self, theta: &[f64]) -> f64 {
        theta[1]
    }
}

impl Model for Ar1Model {
    fn name(&self) -> &str {
        match self.parameterization {
            Ar1Parameterization::M1 => "ar1-m1",
            Ar1Parameterization::M2 => "ar1-m2",
        }
    }

    fn population_size(&self) -> usize {
        self.series.len() - 1
    }

    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        match self.parameterization {
            Ar1Parameterization::M1 => vec!["beta0".into(), "beta1".into()],
            Ar1Parameterization::M2 => vec!["mu".into(), "rho".into()],
        }
    }

    fn contribution(&self, theta: &[f64], k: usize) -> f64 {
        let e = residual(theta, self.window(k), self.parameterization);
        self.log_norm - 0.5 * (self.nu + 1.0) * (e * e / self.nu).ln_1p()
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        if theta[0] > -5.0 && theta[0] < 5.0 && theta[1] > 0.0 && theta[1] < 1.0 {
            -(10.0f64).ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn sign_split(&self, theta: &[f64], k: usize) -> Option<SignSplit> {
        let l = self.contribution(theta, k);
        Some(SignSplit {
            shifted_contribution: l - self.log_norm,
            shift: self.log_norm,
        })
    }

    fn data_space(&self) -> Option<&dyn DataSpace> {
        Some(self)
    }
}

/// Data point `z = (y_t, y_{t-1})`.
impl DataSpace for Ar1Model {
    fn data_dim(&self) -> usize {
        2
    }

    fn point(&self, k: usize) -> Vec<f64> {
        vec![self.series[k + 1], self.series[k]]
    }

    fn loglik_at(&self, theta: &[f64], _category: usize, z: &[f64]) -> f64 {
        ar1_contribution(
            theta,
            ArWindow {
                current: z[0],
                lagged: z[1],
            },
            self.parameterization,
            self.nu,
        )
    }

    fn derivatives(&self, theta: &[f64], _category: usize, z: &[f64]) -> Result<DataDerivatives> {
        let w = ArWindow {
            current: z[0],
            lagged: z[1],
        };
        let e = residual(theta, w, self.parameterization);
        let nu = self.nu;
        let denom = nu + e * e;
        // d/de and d²/de² of the t log-density
        let score = -(nu + 1.0) * e / denom;
        let curvature = -(nu + 1.0) * (nu - e * e) / (denom * denom);
        let de_dz = DVector::from_vec(vec![1.0, -self.slope(theta)]);
        let hessian: DMatrix<f64> = &de_dz * de_dz.transpose() * curvature;
        Ok(DataDerivatives {
            value: self.log_norm - 0.5 * (nu + 1.0) * (e * e / nu).ln_1p(),
            gradient: de_dz * score,
            hessian,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn density_at_mode() {
        let w = ArWindow {
            current: 0.3 + 0.6 * 2.0,
            lagged: 2.0,
        };
        let v = ar1_contribution(&[0.3, 0.6], w, Ar1Parameterization::M1, 5.0);
        let expected =
            (ln_gamma(3.0).exp() / (ln_gamma(2.5).exp() * (5.0 * std::f64::consts::PI).sqrt())).ln();
        assert!((v - expected).abs() < 1e-14);
    }

    #[test]
    fn reparameterization_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m1 = Ar1Model::generate(&[0.3, 0.6], Ar1Parameterization::M1, 5.0, 2000, &mut rng)
            .unwrap();
        let m2 = Ar1Model::new(m1.series().to_vec(), Ar1Parameterization::M2, 5.0).unwrap();
        let beta = [0.3, 0.6];
        let steady = [0.3 / (1.0 - 0.6), 0.6];
        for k in 0..m1.population_size() {
            let a = m1.contribution(&beta, k);
            let b = m2.contribution(&steady, k);
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn prior_support() {
        let m = Ar1Model::new(vec![0.0, 1.0, 0.5], Ar1Parameterization::M2, 5.0).unwrap();
        assert_eq!(m.log_prior(&[0.0, 1.0]), f64::NEG_INFINITY);
        assert_eq!(m.log_prior(&[5.5, 0.5]), f64::NEG_INFINITY);
        assert!((m.log_prior(&[0.0, 0.5]) + 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn windows_tile_the_series() {
        let m = Ar1Model::new(vec![1.0, 2.0, 3.0, 4.0], Ar1Parameterization::M1, 5.0).unwrap();
        assert_eq!(m.population_size(), 3);
        assert_eq!(m.point(0), vec![2.0, 1.0]);
        assert_eq!(m.point(2), vec![4.0, 3.0]);
    }

    #[test]
    fn generator_is_deterministic_and_starts_at_mean() {
        let a = Ar1Model::generate(&[0.3, 0.99], Ar1Parameterization::M2, 5.0, 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = Ar1Model::generate(&[0.3, 0.99], Ar1Parameterization::M2, 5.0, 500, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a.series(), b.series());
        assert_eq!(a.series()[0], 0.3);
    }

    #[test]
    fn sign_split_is_exact_and_nonpositive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = Ar1Model::generate(&[0.3, 0.6], Ar1Parameterization::M1, 5.0, 300, &mut rng).unwrap();
        let theta = [0.1, 0.4];
        for k in 0..m.population_size() {
            let s = m.sign_split(&theta, k).unwrap();
            assert!(s.shifted_contribution <= 0.0);
            assert!((s.shifted_contribution + s.shift - m.contribution(&theta, k)).abs() < 1e-14);
        }
    }
}
