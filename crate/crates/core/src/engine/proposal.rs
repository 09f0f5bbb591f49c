use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Cholesky factor of a proposal covariance, computed once per run.
#[derive(Debug, Clone)]
pub struct ProposalFactor {
    lower: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl ProposalFactor {
    pub fn new(sigma: &DMatrix<f64>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(Error::Factorization("covariance must be a nonempty square matrix".into()));
        }
        let chol = Cholesky::new(sigma.clone()).ok_or_else(|| {
            Error::Factorization("proposal covariance is not positive definite".into())
        })?;
        let lower = chol.l();
        let log_det = 2.0 * lower.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self { lower, chol, log_det })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }

    /// `(x - μ)ᵀ Σ⁻¹ (x - μ)`.
    pub fn mahalanobis(&self, x: &[f64], mean: &[f64]) -> f64 {
        let d = DVector::from_iterator(x.len(), x.iter().zip(mean).map(|(a, b)| a - b));
        let y = self.chol.l().solve_lower_triangular(&d).expect("nonsingular factor");
        y.norm_squared()
    }

    fn correlated_normal<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(self.dim(), (0..self.dim()).map(|_| StandardNormal.sample(rng)));
        &self.lower * z
    }
}

/// `θ_p = θ_c + scale · L z`.
pub fn rwm_propose<R: Rng + ?Sized>(
    theta_c: &[f64],
    scale: f64,
    factor: &ProposalFactor,
    rng: &mut R,
) -> Vec<f64> {
    let step = factor.correlated_normal(rng);
    theta_c.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect()
}

/// Multivariate-t log-density with location `center` and scale matrix Σ.
pub fn multivariate_t_log_density(x: &[f64], center: &[f64], factor: &ProposalFactor, dof: f64) -> f64 {
    let d = factor.dim() as f64;
    let q = factor.mahalanobis(x, center);
    ln_gamma(0.5 * (dof + d)) - ln_gamma(0.5 * dof) - 0.5 * d * (dof * std::f64::consts::PI).ln()
        - 0.5 * factor.log_det
        - 0.5 * (dof + d) * (q / dof).ln_1p()
}

/// Independence draw from `t_dof(θ*, Σ*)`, returning the draw with the
/// proposal log-densities at the draw and at `theta_c`.
pub fn imh_propose<R: Rng + ?Sized>(
    theta_star: &[f64],
    theta_c: &[f64],
    factor: &ProposalFactor,
    dof: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64, f64)> {
    let chi = ChiSquared::new(dof).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let z = factor.correlated_normal(rng);
    let w: f64 = chi.sample(rng);
    let s = (dof / w).sqrt();
    let theta_p: Vec<f64> = theta_star.iter().zip(z.iter()).map(|(m, v)| m + s * v).collect();
    let log_p = multivariate_t_log_density(&theta_p, theta_star, factor, dof);
    let log_c = multivariate_t_log_density(theta_c, theta_star, factor, dof);
    Ok((theta_p, log_p, log_c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sigma() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 0.5])
    }

    #[test]
    fn zero_scale_stays_put() {
        let f = ProposalFactor::new(&sigma()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(rwm_propose(&[0.3, -1.0], 0.0, &f, &mut rng), vec![0.3, -1.0]);
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(ProposalFactor::new(&bad), Err(Error::Factorization(_))));
    }

    #[test]
    fn rwm_covariance_matches() {
        let f = ProposalFactor::new(&sigma()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let scale = 0.7;
        let mut s = [[0.0; 2]; 2];
        for _ in 0..n {
            let p = rwm_propose(&[0.0, 0.0], scale, &f, &mut rng);
            for i in 0..2 {
                for j in 0..2 {
                    s[i][j] += p[i] * p[j];
                }
            }
        }
        let target = sigma() * (scale * scale);
        for i in 0..2 {
            for j in 0..2 {
                let est = s[i][j] / n as f64;
                // Var(x_i x_j) = Σ_ii Σ_jj + Σ_ij² for a centered normal
                let se = ((target[(i, i)] * target[(j, j)] + target[(i, j)].powi(2)) / n as f64).sqrt();
                assert!((est - target[(i, j)]).abs() < 3.0 * se, "({i},{j}) {est}");
            }
        }
    }

    #[test]
    fn t_density_is_deterministic_and_normalized_in_1d() {
        let f = ProposalFactor::new(&DMatrix::from_element(1, 1, 0.25)).unwrap();
        let a = multivariate_t_log_density(&[0.4], &[0.1], &f, 10.0);
        assert_eq!(a, multivariate_t_log_density(&[0.4], &[0.1], &f, 10.0));
        // trapezoid over a wide range
        let h = 1e-3;
        let total: f64 = (-20_000..=20_000)
            .map(|i| multivariate_t_log_density(&[0.1 + i as f64 * h], &[0.1], &f, 10.0).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-4);
    }

    #[test]
    fn imh_reports_consistent_densities() {
        let f = ProposalFactor::new(&sigma()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (p, lp, lc) = imh_propose(&[1.0, 2.0], &[0.0, 0.0], &f, 10.0, &mut rng).unwrap();
        assert_eq!(lp, multivariate_t_log_density(&p, &[1.0, 2.0], &f, 10.0));
        assert_eq!(lc, multivariate_t_log_density(&[0.0, 0.0], &[1.0, 2.0], &f, 10.0));
    }
}
