use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{sigmoid, softplus, DataDerivatives, DataSpace, Model};
use crate::error::{Error, Result};
use crate::estimator::SignSplit;

const PRIOR_VARIANCE: f64 = 10.0;

/// Logistic regression with a `N(0, 10 I)` prior. Responses equal to one are
/// always evaluated; only the zeros are subsampled.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    /// Row-major `n × p` covariates.
    x: Vec<f64>,
    y: Vec<u8>,
    p: usize,
    /// Covariate columns that vary across rows; these span the data space.
    varying: Vec<usize>,
}

/// `y log σ(η) + (1 - y) log(1 - σ(η))`.
pub fn logistic_contribution(eta: f64, y: u8) -> f64 {
    if y == 1 {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

impl LogisticModel {
    pub fn new(x: Vec<f64>, y: Vec<u8>, p: usize) -> Result<Self> {
        if p == 0 || x.len() != y.len() * p {
            return Err(Error::InvalidParams(format!(
                "covariate matrix of length {} does not match {} rows × {p} columns",
                x.len(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if let Some(bad) = y.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidParams(format!("response {bad} is not binary")));
        }
        let n = y.len();
        let varying = (0..p)
            .filter(|&j| {
                let first = x[j];
                (1..n).any(|i| x[i * p + j] != first)
            })
            .collect();
        Ok(Self { x, y, p, varying })
    }

    /// Standard-normal covariates after a leading intercept column.
    pub fn generate<R: Rng + ?Sized>(beta: &[f64], n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyPopulation);
        }
        let p = beta.len();
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let start = x.len();
            x.push(1.0);
            for _ in 1..p {
                x.push(StandardNormal.sample(rng));
            }
            let eta: f64 = x[start..].iter().zip(beta).map(|(a, b)| a * b).sum();
            y.push(u8::from(rng.random::<f64>() < sigmoid(eta)));
        }
        Self::new(x, y, p)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn covariate_dim(&self) -> usize {
        self.p
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.x[k * self.p..(k + 1) * self.p]
    }

    pub fn response(&self, k: usize) -> u8 {
        self.y[k]
    }

    pub fn responses(&self) -> &[u8] {
        &self.y
    }

    pub fn linear_predictor(&self, beta: &[f64], k: usize) -> f64 {
        self.row(k).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    fn full_row(&self, z: &[f64]) -> Vec<f64> {
        // constant columns keep the value of the first row
        let mut row = self.row(0).to_vec();
        for (&j, &v) in self.varying.iter().zip(z) {
            row[j] = v;
        }
        row
    }
}

impl Model for LogisticModel {
    fn name(&self) -> &str {
        "logistic"
    }

    fn population_size(&self) -> usize {
        self.y.len()
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn param_names(&self) -> Vec<String> {
        (0..self.p).map(|j| format!("beta{j}")).collect()
    }

    fn contribution(&self, theta: &[f64], k: usize) -> f64 {
        logistic_contribution(self.linear_predictor(theta, k), self.y[k])
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let norm = -0.5 * (2.0 * std::f64::consts::PI * PRIOR_VARIANCE).ln();
        theta
            .iter()
            .map(|b| norm - b * b / (2.0 * PRIOR_VARIANCE))
            .sum()
    }

    /// Contributions are log-probabilities, hence already nonpositive.
    fn sign_split(&self, theta: &[f64], k: usize) -> Option<SignSplit> {
        Some(SignSplit {
            shifted_contribution: self.contribution(theta, k),
            shift: 0.0,
        })
    }

    fn always_evaluate(&self) -> Vec<usize> {
        (0..self.y.len()).filter(|&k| self.y[k] == 1).collect()
    }

    fn data_space(&self) -> Option<&dyn DataSpace> {
        Some(self)
    }
}

/// Data space: the varying covariates, one category per response value.
impl DataSpace for LogisticModel {
    fn data_dim(&self) -> usize {
        self.varying.len()
    }

    fn category(&self, k: usize) -> usize {
        self.y[k] as usize
    }

    fn point(&self, k: usize) -> Vec<f64> {
        let row = self.row(k);
        self.varying.iter().map(|&j| row[j]).collect()
    }

    fn loglik_at(&self, theta: &[f64], category: usize, z: &[f64]) -> f64 {
        let row = self.full_row(z);
        let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        logistic_contribution(eta, category as u8)
    }

    fn derivatives(&self, theta: &[f64], category: usize, z: &[f64]) -> Result<DataDerivatives> {
        let row = self.full_row(z);
        let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let mean = sigmoid(eta);
        let y = category as f64;
        let beta = DVector::from_iterator(
            self.varying.len(),
            self.varying.iter().map(|&j| theta[j]),
        );
        let gradient = &beta * (y - mean);
        let hessian: DMatrix<f64> = &beta * beta.transpose() * (-mean * (1.0 - mean));
        Ok(DataDerivatives {
            value: logistic_contribution(eta, category as u8),
            gradient,
            hessian,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_variates::glm::{glm_data_gradient_hessian, BernoulliLogit};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_predictor_gives_log_half() {
        assert_eq!(logistic_contribution(0.0, 0), 0.5f64.ln());
        assert_eq!(logistic_contribution(0.0, 1), 0.5f64.ln());
    }

    #[test]
    fn large_predictor_is_stable() {
        // -log(1 + e^-30) evaluated in extended precision
        let reference = -9.357_622_968_840_175e-14;
        let v = logistic_contribution(30.0, 1);
        assert!((v - reference).abs() < 1e-26, "{v}");
        for eta in [-700.0, -300.0, 300.0, 700.0] {
            assert!(logistic_contribution(eta, 0).is_finite());
            assert!(logistic_contribution(eta, 1).is_finite());
        }
    }

    #[test]
    fn contributions_sum_to_monolithic_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = LogisticModel::generate(&[0.2, -1.0, 0.5], 100, &mut rng).unwrap();
        let beta = [0.3, -0.7, 0.4];
        // monolithic form: Σ y η - log(1 + e^η)
        let mut reference = 0.0;
        for k in 0..100 {
            let eta = model.linear_predictor(&beta, k);
            reference += model.response(k) as f64 * eta - (1.0 + eta.exp()).ln();
        }
        let total = model.full_loglik(&beta);
        assert!((total - reference).abs() <= 1e-12 * reference.abs());
    }

    #[test]
    fn zero_coefficients_give_balanced_responses() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 20_000;
        let model = LogisticModel::generate(&[0.0, 0.0], n, &mut rng).unwrap();
        let rate = model.responses().iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        assert!((rate - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt());
    }

    #[test]
    fn data_space_matches_glm_routine() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = LogisticModel::generate(&[0.2, -1.0, 0.5], 50, &mut rng).unwrap();
        let beta = [0.1, 0.8, -0.6];
        for k in 0..50 {
            let z = model.point(k);
            let y = model.response(k);
            let d = model.derivatives(&beta, y as usize, &z).unwrap();
            let mut full = vec![y as f64];
            full.extend_from_slice(model.row(k));
            let (g, h) = glm_data_gradient_hessian(&full, &beta, &BernoulliLogit).unwrap();
            // drop the response and the intercept coordinates
            for i in 0..2 {
                assert!((d.gradient[i] - g[i + 2]).abs() < 1e-12);
                for j in 0..2 {
                    assert!((d.hessian[(i, j)] - h[(i + 2, j + 2)]).abs() < 1e-12);
                }
            }
            assert!((d.value - model.contribution(&beta, k)).abs() < 1e-14);
        }
    }

    #[test]
    fn always_set_is_the_ones() {
        let model = LogisticModel::new(vec![1.0, 0.5, 1.0, -0.5, 1.0, 2.0], vec![1, 0, 1], 2).unwrap();
        assert_eq!(model.always_evaluate(), vec![0, 2]);
        assert_eq!(model.data_dim(), 1);
    }
}
