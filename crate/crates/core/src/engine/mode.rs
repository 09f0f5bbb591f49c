//! Posterior mode and curvature from the full data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::models::Model;

const MAX_ITERATIONS: usize = 500;
const GRADIENT_TOLERANCE: f64 = 1e-6;

fn fd_step(x: f64) -> f64 {
    1e-5 * x.abs().max(1.0)
}

fn gradient<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DVector<f64> {
    let mut work = x.to_vec();
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|i| {
            let h = fd_step(x[i]);
            work[i] = x[i] + h;
            let up = f(&work);
            work[i] = x[i] - h;
            let dn = f(&work);
            work[i] = x[i];
            (up - dn) / (2.0 * h)
        }),
    )
}

/// Central second differences.
pub fn finite_difference_hessian<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let d = x.len();
    let steps: Vec<f64> = x.iter().map(|&v| 1e-4 * v.abs().max(1.0)).collect();
    let mut work = x.to_vec();
    let mut at = |di: f64, i: usize, dj: f64, j: usize| {
        work.copy_from_slice(x);
        work[i] += di * steps[i];
        work[j] += dj * steps[j];
        f(&work)
    };
    let mut h = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = if i == j {
                let f0 = f(x);
                (at(1.0, i, 0.0, i) - 2.0 * f0 + at(-1.0, i, 0.0, i)) / (steps[i] * steps[i])
            } else {
                (at(1.0, i, 1.0, j) - at(1.0, i, -1.0, j) - at(-1.0, i, 1.0, j) + at(-1.0, i, -1.0, j))
                    / (4.0 * steps[i] * steps[j])
            };
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Quasi-Newton (BFGS) minimization of `f` with finite-difference gradients.
/// Returns the minimizer and the number of iterations used.
pub fn minimize<F: Fn(&[f64]) -> f64>(f: &F, init: &[f64]) -> Result<(Vec<f64>, usize)> {
    let d = init.len();
    let mut x = DVector::from_column_slice(init);
    let mut fx = f(x.as_slice());
    if !fx.is_finite() {
        return Err(Error::InvalidParams("objective is not finite at the starting point".into()));
    }
    let mut g = gradient(f, x.as_slice());
    let mut inv_h = DMatrix::identity(d, d);
    // relative gradient: |g_i|·max(|x_i|, 1) / max(|f|, 1)
    let scaled = |g: &DVector<f64>, x: &DVector<f64>, fx: f64| {
        g.iter().zip(x.iter()).map(|(gi, xi)| gi.abs() * xi.abs().max(1.0)).fold(0.0, f64::max) / fx.abs().max(1.0)
    };
    for iter in 0..MAX_ITERATIONS {
        if scaled(&g, &x, fx) <= GRADIENT_TOLERANCE {
            return Ok((x.as_slice().to_vec(), iter));
        }
        let mut dir = -(&inv_h * &g);
        if dir.dot(&g) >= 0.0 {
            inv_h = DMatrix::identity(d, d);
            dir = -g.clone();
        }
        // backtracking line search with the Armijo condition
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            let ft = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if inv_h != DMatrix::identity(d, d) {
                inv_h = DMatrix::identity(d, d);
                continue;
            }
            // no descent possible within floating-point resolution
            if scaled(&g, &x, fx) <= 1e3 * GRADIENT_TOLERANCE {
                return Ok((x.as_slice().to_vec(), iter));
            }
            return Err(Error::NonConvergence {
                iterations: iter,
                gradient_norm: g.amax(),
                best: x.as_slice().to_vec(),
            });
        };
        let g_new = gradient(f, x_new.as_slice());
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(d, d);
            let left = &eye - &s * y.transpose() * rho;
            let right = &eye - &y * s.transpose() * rho;
            inv_h = &left * &inv_h * &right + &s * s.transpose() * rho;
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    if scaled(&g, &x, fx) <= GRADIENT_TOLERANCE {
        return Ok((x.as_slice().to_vec(), MAX_ITERATIONS));
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITERATIONS,
        gradient_norm: g.amax(),
        best: x.as_slice().to_vec(),
    })
}

/// Posterior mode `θ*` and `Σ* = (-∇² log p(θ|y))⁻¹` at the mode.
pub fn find_mode_and_curvature(model: &dyn Model, init_theta: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let objective = |t: &[f64]| -model.log_posterior(t);
    let (mode, _) = minimize(&objective, init_theta)?;
    let hessian = finite_difference_hessian(&objective, &mode);
    let sigma = hessian.clone().try_inverse().ok_or_else(|| {
        Error::Factorization("posterior curvature at the mode is singular".into())
    })?;
    if nalgebra::Cholesky::new(sigma.clone()).is_none() {
        return Err(Error::Factorization(
            "negative Hessian at the mode is not positive definite".into(),
        ));
    }
    // symmetrize away rounding
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok((mode, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{LogisticModel, NormalModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_objective() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let center = [1.5, -0.5];
        let f = |x: &[f64]| {
            let d = DVector::from_iterator(2, x.iter().zip(&center).map(|(a, b)| a - b));
            0.5 * d.dot(&(&a * &d))
        };
        let (x, iters) = minimize(&f, &[0.0, 0.0]).unwrap();
        assert!(iters < 20);
        assert!((x[0] - 1.5).abs() < 1e-6 && (x[1] + 0.5).abs() < 1e-6);
        let h = finite_difference_hessian(&f, &x);
        assert!((h - &a).amax() < 1e-8 * 4.0);
    }

    #[test]
    fn conjugate_normal_mode_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = NormalModel::generate(2.0, 1.0, 200, true, &mut rng).unwrap();
        let (mode, sigma) = find_mode_and_curvature(&model, &[0.0]).unwrap();
        let sum: f64 = model.observations().iter().sum();
        let precision = 200.0 + 1.0 / 10.0;
        assert!((mode[0] - sum / precision).abs() < 1e-6);
        assert!((sigma[(0, 0)] - 1.0 / precision).abs() < 1e-8);
    }

    #[test]
    fn logistic_mode_matches_newton_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = LogisticModel::generate(&[-0.5, 1.0, -0.8], 10_000, &mut rng).unwrap();
        let (mode, _) = find_mode_and_curvature(&model, &[0.0; 3]).unwrap();
        // independent Newton iterations with the analytic score and information
        let mut beta = DVector::zeros(3);
        for _ in 0..30 {
            let mut score = -&beta / 10.0;
            let mut info = DMatrix::identity(3, 3) / 10.0;
            for k in 0..model.n() {
                let x = DVector::from_column_slice(model.row(k));
                let p = 1.0 / (1.0 + (-x.dot(&beta)).exp());
                score += &x * (model.response(k) as f64 - p);
                info += &x * x.transpose() * (p * (1.0 - p));
            }
            beta += info.lu().solve(&score).unwrap();
        }
        for i in 0..3 {
            assert!((mode[i] - beta[i]).abs() < 1e-5, "{mode:?} vs {beta}");
        }
    }

    #[test]
    fn non_convergence_carries_best_iterate() {
        // unbounded below along x
        let f = |x: &[f64]| -x[0];
        match minimize(&f, &[0.0]) {
            Err(Error::NonConvergence { best, .. }) => assert!(best[0] > 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }
}
