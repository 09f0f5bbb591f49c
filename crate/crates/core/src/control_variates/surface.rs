//! Log-likelihood surfaces over data space, fitted once at a reference θ.
//!
//! Exact contributions are computed on a fixed training set `V` and mapped
//! linearly onto the remaining points, either through a ridge-regularized
//! thin-plate spline with k-means knots or a noise-free Gaussian process.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cluster::Standardizer;
use super::{ControlVariates, PreparedVariates};
use crate::error::{Error, Result};
use crate::models::{Model, Population};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurfaceMethod {
    ThinPlate,
    GaussianProcess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceConfig {
    pub method: SurfaceMethod,
    /// Thin-plate knot count.
    pub knots: usize,
    /// Ridge penalties (thin-plate) or length scales (GP) to choose from.
    pub grid: Vec<f64>,
    pub residual_adjustment: bool,
    pub seed: u64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            method: SurfaceMethod::ThinPlate,
            knots: 50,
            grid: vec![0.0, 1e-8, 1e-6, 1e-4, 1e-2, 1.0],
            residual_adjustment: false,
            seed: 0,
        }
    }
}

/// Fixed linear map from training values to predictions.
#[derive(Debug, Clone)]
pub struct SurfaceFit {
    pub method: SurfaceMethod,
    pub training: Vec<usize>,
    pub prediction: Vec<usize>,
    /// `(B_VᵀB_V + λI)⁻¹ B_Vᵀ` or `K(V, V)⁻¹`.
    solve_operator: DMatrix<f64>,
    /// `B_{V^c}` or `K(V^c, V)`.
    prediction_matrix: DMatrix<f64>,
    /// `B_V` or `K(V, V)`, used for training residuals.
    training_matrix: DMatrix<f64>,
    /// Nearest training slot for each prediction point.
    nearest: Option<Vec<usize>>,
    pub hyperparameter: f64,
    pub jitter: f64,
    /// Set when λ = 0 was singular and the smallest positive λ was used.
    pub fell_back: bool,
}

fn sq_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn thin_plate_basis(r2: f64) -> f64 {
    if r2 == 0.0 {
        0.0
    } else {
        // r² log r = ½ r² log r²
        0.5 * r2 * r2.ln()
    }
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, iterations: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut centers = vec![points[rng.random_range(0..n)].clone()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_distance(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq_distance(p, &centers[centers.len() - 1]));
        }
    }
    let dim = points[0].len();
    let mut labels = vec![usize::MAX; n];
    for _ in 0..iterations {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k)
                .min_by(|&a, &b| sq_distance(p, &centers[a]).total_cmp(&sq_distance(p, &centers[b])))
                .expect("k > 0");
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    centers
}

struct Candidate {
    solve: DMatrix<f64>,
    hyper: f64,
    jitter: f64,
    fell_back: bool,
}

fn thin_plate_candidates(basis_train: &DMatrix<f64>, grid: &[f64]) -> Result<Vec<Candidate>> {
    let gram = basis_train.transpose() * basis_train;
    let smallest_positive = grid.iter().copied().filter(|&l| l > 0.0).fold(f64::INFINITY, f64::min);
    let mut out = Vec::new();
    for &lambda in grid {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("ridge penalty {lambda} is negative")));
        }
        let solve_with = |l: f64| -> Option<DMatrix<f64>> {
            let mut a = gram.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += l;
            }
            let chol = Cholesky::<f64, Dyn>::new(a)?;
            let solve = chol.solve(&basis_train.transpose());
            solve.iter().all(|v| v.is_finite()).then_some(solve)
        };
        match solve_with(lambda) {
            Some(solve) => out.push(Candidate {
                solve,
                hyper: lambda,
                jitter: 0.0,
                fell_back: false,
            }),
            None if lambda == 0.0 && smallest_positive.is_finite() => {
                if let Some(solve) = solve_with(smallest_positive) {
                    out.push(Candidate {
                        solve,
                        hyper: smallest_positive,
                        jitter: 0.0,
                        fell_back: true,
                    });
                }
            }
            None => {}
        }
    }
    Ok(out)
}

fn gp_kernel(a: &[Vec<f64>], b: &[Vec<f64>], length: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| {
        (-0.5 * sq_distance(&a[i], &b[j]) / (length * length)).exp()
    })
}

fn gp_solve(kernel: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = kernel.nrows();
    if let Some(chol) = Cholesky::new(kernel.clone()) {
        let inv = chol.inverse();
        if inv.iter().all(|v| v.is_finite()) {
            return Some((inv, 0.0));
        }
    }
    let jitter = 1e-8 * kernel.diagonal().mean();
    let mut k = kernel.clone();
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    Cholesky::new(k).map(|c| (c.inverse(), jitter))
}

/// Fits the surface on `training` and selects the hyperparameter from
/// `config.grid` by the prediction error on the complement at the reference
/// values `values` (one per point).
pub fn fit_surface(
    points: &[Vec<f64>],
    training: &[usize],
    values: &[f64],
    config: &SurfaceConfig,
) -> Result<SurfaceFit> {
    let n = points.len();
    if values.len() != n {
        return Err(Error::InvalidConfig("one reference value per point is required".into()));
    }
    if training.is_empty() || training.iter().any(|&i| i >= n) {
        return Err(Error::InvalidConfig("training set must be a nonempty subset".into()));
    }
    if config.grid.is_empty() {
        return Err(Error::InvalidConfig("hyperparameter grid is empty".into()));
    }
    let mut in_training = vec![false; n];
    for &i in training {
        in_training[i] = true;
    }
    let prediction: Vec<usize> = (0..n).filter(|&i| !in_training[i]).collect();
    let train_pts: Vec<Vec<f64>> = training.iter().map(|&i| points[i].clone()).collect();
    let pred_pts: Vec<Vec<f64>> = prediction.iter().map(|&i| points[i].clone()).collect();
    let l_train = DVector::from_iterator(training.len(), training.iter().map(|&i| values[i]));
    let l_pred = DVector::from_iterator(prediction.len(), prediction.iter().map(|&i| values[i]));

    let mut best: Option<(f64, SurfaceFit)> = None;
    let mut consider = |fit: SurfaceFit| {
        let pred = fit.predict_vector(&l_train);
        let err = (&pred - &l_pred).norm();
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, fit));
        }
    };
    match config.method {
        SurfaceMethod::ThinPlate => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let knots = kmeans(&train_pts, config.knots.max(1), 100, &mut rng);
            let design = |pts: &[Vec<f64>]| {
                DMatrix::from_fn(pts.len(), knots.len(), |i, m| {
                    thin_plate_basis(sq_distance(&pts[i], &knots[m]))
                })
            };
            let b_train = design(&train_pts);
            let b_pred = design(&pred_pts);
            for c in thin_plate_candidates(&b_train, &config.grid)? {
                consider(SurfaceFit {
                    method: config.method,
                    training: training.to_vec(),
                    prediction: prediction.clone(),
                    solve_operator: c.solve,
                    prediction_matrix: b_pred.clone(),
                    training_matrix: b_train.clone(),
                    nearest: None,
                    hyperparameter: c.hyper,
                    jitter: c.jitter,
                    fell_back: c.fell_back,
                });
            }
        }
        SurfaceMethod::GaussianProcess => {
            for &length in &config.grid {
                if !(length > 0.0) {
                    return Err(Error::InvalidConfig(format!("length scale {length} must be positive")));
                }
                let k_train = gp_kernel(&train_pts, &train_pts, length);
                let Some((inv, jitter)) = gp_solve(&k_train) else {
                    continue;
                };
                consider(SurfaceFit {
                    method: config.method,
                    training: training.to_vec(),
                    prediction: prediction.clone(),
                    solve_operator: inv,
                    prediction_matrix: gp_kernel(&pred_pts, &train_pts, length),
                    training_matrix: k_train,
                    nearest: None,
                    hyperparameter: length,
                    jitter,
                    fell_back: false,
                });
            }
        }
    }
    let (_, mut fit) = best.ok_or_else(|| {
        Error::Factorization("no hyperparameter in the grid gave a solvable system".into())
    })?;
    if config.residual_adjustment {
        let nearest = pred_pts
            .iter()
            .map(|p| {
                (0..train_pts.len())
                    .min_by(|&a, &b| sq_distance(p, &train_pts[a]).total_cmp(&sq_distance(p, &train_pts[b])))
                    .expect("nonempty training set")
            })
            .collect();
        fit.nearest = Some(nearest);
    }
    Ok(fit)
}

impl SurfaceFit {
    fn predict_vector(&self, l_train: &DVector<f64>) -> DVector<f64> {
        let coef = &self.solve_operator * l_train;
        let mut pred = &self.prediction_matrix * &coef;
        if let Some(nearest) = &self.nearest {
            let fitted = &self.training_matrix * &coef;
            for (p, &j) in pred.iter_mut().zip(nearest) {
                *p += l_train[j] - fitted[j];
            }
        }
        pred
    }
}

/// Predictions for the complement points, in `fit.prediction` order.
pub fn predict_surface(fit: &SurfaceFit, loglik_train: &[f64]) -> Vec<f64> {
    let l = DVector::from_column_slice(loglik_train);
    fit.predict_vector(&l).as_slice().to_vec()
}

/// Training points: per-dimension extremes for boundary coverage, topped up
/// with a uniform random choice.
pub fn choose_training<R: Rng + ?Sized>(points: &[Vec<f64>], size: usize, rng: &mut R) -> Vec<usize> {
    let n = points.len();
    let size = size.min(n);
    let mut chosen = vec![false; n];
    let mut out = Vec::with_capacity(size);
    let dim = points.first().map_or(0, Vec::len);
    for d in 0..dim {
        let by = |f: fn(std::cmp::Ordering) -> bool| {
            (0..n).reduce(|a, b| if f(points[b][d].total_cmp(&points[a][d])) { b } else { a })
        };
        for pick in [by(|o| o.is_lt()), by(|o| o.is_gt())].into_iter().flatten() {
            if !chosen[pick] && out.len() < size {
                chosen[pick] = true;
                out.push(pick);
            }
        }
    }
    let remaining: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
    let extra = size - out.len();
    for j in sample(rng, remaining.len(), extra.min(remaining.len())) {
        out.push(remaining[j]);
    }
    out.sort_unstable();
    out
}

struct CategoryFit {
    /// Global element ids of the category's training and prediction points.
    training: Vec<usize>,
    prediction: Vec<usize>,
    fit: SurfaceFit,
}

/// Surface-based control variates over the frame, one fit per category.
pub struct SurfaceVariates {
    frame: Vec<usize>,
    n: usize,
    fits: Vec<CategoryFit>,
}

impl SurfaceVariates {
    /// `training_size` points per category are evaluated exactly at every
    /// iteration; the fit is tuned at `theta_hat`.
    pub fn build(
        model: &dyn Model,
        population: &Population,
        theta_hat: &[f64],
        training_size: usize,
        config: &SurfaceConfig,
    ) -> Result<Self> {
        let space = model.data_space().ok_or_else(|| {
            Error::Unsupported(format!("model `{}` has no data space", model.name()))
        })?;
        let raw: Vec<Vec<f64>> = population.frame.iter().map(|&k| space.point(k)).collect();
        let standardizer = Standardizer::fit(&raw)?;
        let mut categories: Vec<usize> = population.frame.iter().map(|&k| space.category(k)).collect();
        categories.sort_unstable();
        categories.dedup();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut fits = Vec::new();
        for cat in categories {
            let members: Vec<usize> = population
                .frame
                .iter()
                .copied()
                .filter(|&k| space.category(k) == cat)
                .collect();
            let pts: Vec<Vec<f64>> = members.iter().map(|&k| standardizer.apply(&space.point(k))).collect();
            let values: Vec<f64> = members.iter().map(|&k| model.contribution(theta_hat, k)).collect();
            let train = choose_training(&pts, training_size.max(1), &mut rng);
            let fit = fit_surface(&pts, &train, &values, config)?;
            fits.push(CategoryFit {
                training: fit.training.iter().map(|&i| members[i]).collect(),
                prediction: fit.prediction.iter().map(|&i| members[i]).collect(),
                fit,
            });
        }
        Ok(Self {
            frame: population.frame.clone(),
            n: model.population_size(),
            fits,
        })
    }

    pub fn training_size(&self) -> usize {
        self.fits.iter().map(|f| f.training.len()).sum()
    }

    pub fn hyperparameters(&self) -> Vec<f64> {
        self.fits.iter().map(|f| f.fit.hyperparameter).collect()
    }
}

struct DenseVariates {
    values: Vec<f64>,
    total: f64,
    cost: u64,
}

impl PreparedVariates for DenseVariates {
    fn total(&self) -> f64 {
        self.total
    }

    fn cost(&self) -> u64 {
        self.cost
    }

    fn variate(&self, k: usize) -> f64 {
        self.values[k]
    }
}

impl ControlVariates for SurfaceVariates {
    fn name(&self) -> &str {
        "surface"
    }

    fn prepare<'a>(&'a self, model: &dyn Model, theta: &[f64]) -> Result<Box<dyn PreparedVariates + 'a>> {
        let mut values = vec![0.0; self.n];
        let mut cost = 0;
        for f in &self.fits {
            let l_train: Vec<f64> = f.training.iter().map(|&k| model.contribution(theta, k)).collect();
            cost += l_train.len() as u64;
            for (&k, &v) in f.training.iter().zip(&l_train) {
                values[k] = v;
            }
            for (&k, v) in f.prediction.iter().zip(predict_surface(&f.fit, &l_train)) {
                values[k] = v;
            }
        }
        let total = self.frame.iter().map(|&k| values[k]).sum();
        Ok(Box::new(DenseVariates { values, total, cost }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LogisticModel;

    fn grid_points(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| vec![(i as f64 * 0.37).sin() * 2.0, (i as f64 * 0.61).cos()])
            .collect()
    }

    #[test]
    fn heavy_ridge_shrinks_predictions_to_zero() {
        let pts = grid_points(40);
        let values: Vec<f64> = pts.iter().map(|p| -1.0 - p[0] * p[0]).collect();
        let train: Vec<usize> = (0..20).collect();
        let config = SurfaceConfig {
            knots: 10,
            grid: vec![1e12],
            ..SurfaceConfig::default()
        };
        let fit = fit_surface(&pts, &train, &values, &config).unwrap();
        let pred = predict_surface(&fit, &values[..20]);
        assert!(pred.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn square_thin_plate_interpolates() {
        // knots equal to the training points make the design square
        let pts = grid_points(12);
        let mut all = pts.clone();
        all.push(pts[3].clone());
        let values: Vec<f64> = all.iter().map(|p| (p[0] - p[1]).sin()).collect();
        let train: Vec<usize> = (0..12).collect();
        let config = SurfaceConfig {
            knots: 12,
            grid: vec![0.0],
            ..SurfaceConfig::default()
        };
        let fit = fit_surface(&all, &train, &values, &config).unwrap();
        assert!(!fit.fell_back);
        let pred = predict_surface(&fit, &values[..12]);
        assert!((pred[0] - values[3]).abs() < 1e-8, "{} vs {}", pred[0], values[3]);
    }

    #[test]
    fn gp_interpolates_duplicated_training_point() {
        let pts = grid_points(15);
        let mut all = pts.clone();
        all.push(pts[7].clone());
        let values: Vec<f64> = all.iter().map(|p| p[0].exp() - p[1]).collect();
        let train: Vec<usize> = (0..15).collect();
        let config = SurfaceConfig {
            method: SurfaceMethod::GaussianProcess,
            grid: vec![0.8],
            ..SurfaceConfig::default()
        };
        let fit = fit_surface(&all, &train, &values, &config).unwrap();
        let pred = predict_surface(&fit, &values[..15]);
        assert!((pred[0] - values[7]).abs() < 1e-8);
    }

    #[test]
    fn predictions_are_linear_in_training_values() {
        let pts = grid_points(60);
        let values: Vec<f64> = pts.iter().map(|p| -p[0].abs()).collect();
        let train: Vec<usize> = (0..30).collect();
        let fit = fit_surface(&pts, &train, &values, &SurfaceConfig { knots: 8, ..SurfaceConfig::default() }).unwrap();
        assert!(predict_surface(&fit, &[0.0; 30]).iter().all(|&v| v == 0.0));
        let base = predict_surface(&fit, &values[..30]);
        let scaled: Vec<f64> = values[..30].iter().map(|v| 3.0 * v).collect();
        for (a, b) in predict_surface(&fit, &scaled).iter().zip(&base) {
            assert!((a - 3.0 * b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn logistic_surface_beats_mean_baseline() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let beta = [-1.0, 1.2, -0.7];
        let model = LogisticModel::generate(&beta, 3000, &mut rng).unwrap();
        let pop = Population::of(&model);
        for method in [SurfaceMethod::ThinPlate, SurfaceMethod::GaussianProcess] {
            let config = SurfaceConfig {
                method,
                knots: 40,
                grid: match method {
                    SurfaceMethod::ThinPlate => vec![0.0, 1e-6, 1e-3],
                    SurfaceMethod::GaussianProcess => vec![0.5, 1.0, 2.0],
                },
                ..SurfaceConfig::default()
            };
            let cv = SurfaceVariates::build(&model, &pop, &beta, 200, &config).unwrap();
            let prepared = cv.prepare(&model, &beta).unwrap();
            let exact: Vec<f64> = pop.frame.iter().map(|&k| model.contribution(&beta, k)).collect();
            let mean = exact.iter().sum::<f64>() / exact.len() as f64;
            let mut surface_err: Vec<f64> = pop.frame.iter().zip(&exact).map(|(&k, l)| (prepared.variate(k) - l).abs()).collect();
            let mut baseline_err: Vec<f64> = exact.iter().map(|l| (l - mean).abs()).collect();
            surface_err.sort_by(f64::total_cmp);
            baseline_err.sort_by(f64::total_cmp);
            let mid = exact.len() / 2;
            assert!(surface_err[mid] < baseline_err[mid], "{method:?}");
            assert_eq!(prepared.cost(), cv.training_size() as u64);
        }
    }
}
