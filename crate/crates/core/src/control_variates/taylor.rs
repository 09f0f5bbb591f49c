//! Second-order Taylor proxies around cluster centroids.
//!
//! Expanding `l(z; θ)` around the centroid `c_j` of cluster `C_j` and summing
//! over its members collapses to
//! `N_j l(c_j) + ∇l(c_j)ᵀ s_j + ½ Σ (H(c_j) ∘ B^j)`, where
//! `s_j = Σ (z_k - c_j)` and `B^j = Σ (z_k - c_j)(z_k - c_j)ᵀ` depend only on
//! the data. The proxy total therefore costs one derivative evaluation per
//! cluster.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::cluster::{cluster_with_categories, ClusterSet, Standardizer};
use super::{ControlVariates, PreparedVariates};
use crate::error::{Error, Result};
use crate::models::{DataDerivatives, DataSpace, Model, Population};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidSummary {
    pub category: usize,
    /// Centroid in raw data coordinates.
    pub centroid: Vec<f64>,
    pub count: usize,
    pub deviation_sum: DVector<f64>,
    pub deviation_outer_sum: DMatrix<f64>,
}

/// Fills `s_j` and `B^j` for every cluster. `points` are raw data points
/// aligned with `clusters.assignments`.
pub fn precompute_centroid_statistics(
    points: &[Vec<f64>],
    clusters: &ClusterSet,
) -> Vec<CentroidSummary> {
    let dim = points.first().map_or(0, Vec::len);
    let members = clusters.members();
    members
        .iter()
        .enumerate()
        .map(|(j, idx)| {
            let mut centroid = vec![0.0; dim];
            for &k in idx {
                for (c, v) in centroid.iter_mut().zip(&points[k]) {
                    *c += v;
                }
            }
            centroid.iter_mut().for_each(|c| *c /= idx.len() as f64);
            let mut s = DVector::zeros(dim);
            let mut b = DMatrix::zeros(dim, dim);
            for &k in idx {
                let dev = DVector::from_iterator(dim, points[k].iter().zip(&centroid).map(|(z, c)| z - c));
                s += &dev;
                b += &dev * dev.transpose();
            }
            CentroidSummary {
                category: clusters.categories[j],
                centroid,
                count: idx.len(),
                deviation_sum: s,
                deviation_outer_sum: b,
            }
        })
        .collect()
}

/// `l(c) + ∇ᵀ(z - c) + ½ (z - c)ᵀ H (z - c)`.
pub fn taylor_proxy(z: &[f64], centroid: &[f64], derivatives: &DataDerivatives) -> f64 {
    let dim = z.len();
    let dev = DVector::from_iterator(dim, z.iter().zip(centroid).map(|(a, c)| a - c));
    derivatives.value + derivatives.gradient.dot(&dev) + 0.5 * dev.dot(&(&derivatives.hessian * &dev))
}

fn cluster_term(summary: &CentroidSummary, d: &DataDerivatives) -> f64 {
    summary.count as f64 * d.value
        + d.gradient.dot(&summary.deviation_sum)
        + 0.5 * d.hessian.component_mul(&summary.deviation_outer_sum).sum()
}

/// Compact proxy total and its cost in derivative evaluations.
pub fn proxy_total(
    theta: &[f64],
    space: &dyn DataSpace,
    summaries: &[CentroidSummary],
) -> Result<(f64, u64)> {
    let mut total = 0.0;
    for s in summaries {
        let d = space.derivatives(theta, s.category, &s.centroid)?;
        total += cluster_term(s, &d);
    }
    Ok((total, summaries.len() as u64))
}

/// Centroid Taylor control variates over the sampling frame.
#[derive(Debug, Clone)]
pub struct TaylorVariates {
    points: Vec<Vec<f64>>,
    frame_position: Vec<usize>,
    standardizer: Standardizer,
    clusters: ClusterSet,
    summaries: Vec<CentroidSummary>,
    fixed_hessians: Option<Vec<DMatrix<f64>>>,
}

fn data_space(model: &dyn Model) -> Result<&dyn DataSpace> {
    model.data_space().ok_or_else(|| {
        Error::Unsupported(format!("model `{}` has no data-space derivatives", model.name()))
    })
}

impl TaylorVariates {
    /// Clusters the frame's standardized data points within `epsilon`.
    pub fn build(model: &dyn Model, population: &Population, epsilon: f64) -> Result<Self> {
        let space = data_space(model)?;
        let points: Vec<Vec<f64>> = population.frame.iter().map(|&k| space.point(k)).collect();
        let categories: Vec<usize> = population.frame.iter().map(|&k| space.category(k)).collect();
        let standardizer = Standardizer::fit(&points)?;
        let scaled: Vec<Vec<f64>> = points.iter().map(|p| standardizer.apply(p)).collect();
        let clusters = cluster_with_categories(&scaled, &categories, epsilon)?;
        Self::from_clustering(model, population, standardizer, clusters)
    }

    /// Reuses a clustering computed earlier over the same frame.
    pub fn from_clustering(
        model: &dyn Model,
        population: &Population,
        standardizer: Standardizer,
        clusters: ClusterSet,
    ) -> Result<Self> {
        let space = data_space(model)?;
        if clusters.assignments.len() != population.frame.len() {
            return Err(Error::InvalidConfig(format!(
                "clustering covers {} points but the frame has {}",
                clusters.assignments.len(),
                population.frame.len()
            )));
        }
        let points: Vec<Vec<f64>> = population.frame.iter().map(|&k| space.point(k)).collect();
        let summaries = precompute_centroid_statistics(&points, &clusters);
        let mut frame_position = vec![usize::MAX; model.population_size()];
        for (pos, &k) in population.frame.iter().enumerate() {
            frame_position[k] = pos;
        }
        Ok(Self {
            points,
            frame_position,
            standardizer,
            clusters,
            summaries,
            fixed_hessians: None,
        })
    }

    /// Evaluates every centroid Hessian once at `theta_hat` and reuses it.
    pub fn fix_hessian_at(&mut self, model: &dyn Model, theta_hat: &[f64]) -> Result<()> {
        let space = data_space(model)?;
        let hessians = self
            .summaries
            .iter()
            .map(|s| space.derivatives(theta_hat, s.category, &s.centroid).map(|d| d.hessian))
            .collect::<Result<Vec<_>>>()?;
        self.fixed_hessians = Some(hessians);
        Ok(())
    }

    pub fn clusters(&self) -> &ClusterSet {
        &self.clusters
    }

    pub fn summaries(&self) -> &[CentroidSummary] {
        &self.summaries
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// `N_C / n` over the frame.
    pub fn cluster_fraction(&self) -> f64 {
        self.clusters.len() as f64 / self.points.len().max(1) as f64
    }
}

struct PreparedTaylor<'a> {
    owner: &'a TaylorVariates,
    derivatives: Vec<DataDerivatives>,
    total: f64,
}

impl PreparedVariates for PreparedTaylor<'_> {
    fn total(&self) -> f64 {
        self.total
    }

    fn cost(&self) -> u64 {
        self.derivatives.len() as u64
    }

    fn variate(&self, k: usize) -> f64 {
        let pos = self.owner.frame_position[k];
        let c = self.owner.clusters.assignments[pos];
        taylor_proxy(
            &self.owner.points[pos],
            &self.owner.summaries[c].centroid,
            &self.derivatives[c],
        )
    }
}

impl ControlVariates for TaylorVariates {
    fn name(&self) -> &str {
        "taylor"
    }

    fn prepare<'a>(&'a self, model: &dyn Model, theta: &[f64]) -> Result<Box<dyn PreparedVariates + 'a>> {
        let space = data_space(model)?;
        let mut derivatives = Vec::with_capacity(self.summaries.len());
        let mut total = 0.0;
        for (j, s) in self.summaries.iter().enumerate() {
            let mut d = space.derivatives(theta, s.category, &s.centroid)?;
            if let Some(fixed) = &self.fixed_hessians {
                d.hessian.copy_from(&fixed[j]);
            }
            total += cluster_term(s, &d);
            derivatives.push(d);
        }
        Ok(Box::new(PreparedTaylor {
            owner: self,
            derivatives,
            total,
        }))
    }

    fn suitable_for_weights(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_variates::cluster::cluster_epsilon_ball;
    use crate::models::{LogisticModel, NormalModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn singleton_statistics_vanish() {
        let data = vec![vec![0.0, 0.0], vec![5.0, 5.0]];
        let c = cluster_epsilon_ball(&data, 0.1).unwrap();
        for s in precompute_centroid_statistics(&data, &c) {
            assert_eq!(s.deviation_sum, DVector::zeros(2));
            assert_eq!(s.deviation_outer_sum, DMatrix::zeros(2, 2));
        }
    }

    #[test]
    fn symmetric_pair() {
        let data = vec![vec![-1.0, 2.0], vec![1.0, -2.0]];
        let c = cluster_epsilon_ball(&data, 10.0).unwrap();
        let s = &precompute_centroid_statistics(&data, &c)[0];
        assert_eq!(s.deviation_sum, DVector::zeros(2));
        let a = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(s.deviation_outer_sum, &a * a.transpose() * 2.0);
    }

    #[test]
    fn proxy_at_centroid_is_the_value() {
        let d = DataDerivatives {
            value: -1.5,
            gradient: DVector::from_vec(vec![1.0, 2.0]),
            hessian: DMatrix::identity(2, 2),
        };
        assert_eq!(taylor_proxy(&[0.3, 0.4], &[0.3, 0.4], &d), -1.5);
    }

    #[test]
    fn quadratic_model_is_reproduced_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = NormalModel::generate(0.5, 2.0, 400, false, &mut rng).unwrap();
        let pop = Population::of(&model);
        let cv = TaylorVariates::build(&model, &pop, 0.7).unwrap();
        let theta = [0.1, 0.3];
        let prepared = cv.prepare(&model, &theta).unwrap();
        let exact = model.full_loglik(&theta);
        assert!((prepared.total() - exact).abs() <= 1e-10 * exact.abs());
        for k in 0..400 {
            let l = model.contribution(&theta, k);
            assert!((prepared.variate(k) - l).abs() <= 1e-10 * l.abs().max(1.0));
        }
    }

    #[test]
    fn shrinking_epsilon_improves_logistic_proxies() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = LogisticModel::generate(&[0.2, -1.0, 0.5], 1000, &mut rng).unwrap();
        let pop = Population::of(&model);
        let theta = [0.3, -0.8, 0.6];
        let mut previous = f64::INFINITY;
        for eps in [1.0, 0.5, 0.25, 0.1, 0.02] {
            let cv = TaylorVariates::build(&model, &pop, eps).unwrap();
            let prepared = cv.prepare(&model, &theta).unwrap();
            let worst = pop
                .frame
                .iter()
                .map(|&k| (prepared.variate(k) - model.contribution(&theta, k)).abs())
                .fold(0.0, f64::max);
            assert!(worst < previous, "eps {eps}: {worst} vs {previous}");
            previous = worst;
        }
        assert!(previous < 1e-3);
    }

    #[test]
    fn compact_total_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let model = LogisticModel::generate(&[0.2, -1.0, 0.5], 1000, &mut rng).unwrap();
        let pop = Population::of(&model);
        let cv = TaylorVariates::build(&model, &pop, 0.4).unwrap();
        let theta = [-0.1, 0.7, 0.2];
        let prepared = cv.prepare(&model, &theta).unwrap();
        let brute: f64 = pop.frame.iter().map(|&k| prepared.variate(k)).sum();
        assert!((prepared.total() - brute).abs() <= 1e-10 * brute.abs());
        let (compact, cost) = proxy_total(&theta, model.data_space().unwrap(), cv.summaries()).unwrap();
        assert_eq!(compact, prepared.total());
        assert_eq!(cost, cv.clusters().len() as u64);
    }

    #[test]
    fn fixed_hessian_keeps_statistics_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let model = LogisticModel::generate(&[0.2, -1.0, 0.5], 300, &mut rng).unwrap();
        let pop = Population::of(&model);
        let mut cv = TaylorVariates::build(&model, &pop, 0.5).unwrap();
        let before = cv.summaries().to_vec();
        cv.fix_hessian_at(&model, &[0.2, -1.0, 0.5]).unwrap();
        let _ = cv.prepare(&model, &[0.0, -0.5, 0.3]).unwrap();
        assert_eq!(cv.summaries(), before.as_slice());
    }
}
