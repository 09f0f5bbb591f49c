//! Greedy ε-ball clustering of standardized data points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension z-scoring with stored constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    /// Constant dimensions keep unit scale.
    pub fn fit(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptyPopulation)?;
        let dim = first.len();
        let n = points.len() as f64;
        let mut mean = vec![0.0; dim];
        for p in points {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sd = vec![0.0; dim];
        for p in points {
            for ((s, v), m) in sd.iter_mut().zip(p).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut sd {
            *s = (*s / n).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Ok(Self { mean, sd })
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.sd)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Cluster means, in the coordinates the clustering was run in.
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id of each point.
    pub assignments: Vec<usize>,
    pub counts: Vec<usize>,
    /// Index of the point that founded each cluster.
    pub seeds: Vec<usize>,
    pub categories: Vec<usize>,
}

impl ClusterSet {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.len()];
        for (i, &c) in self.assignments.iter().enumerate() {
            out[c].push(i);
        }
        out
    }

    /// Largest member distance to its founding seed and to its centroid.
    pub fn membership_radii(&self, data: &[Vec<f64>]) -> (f64, f64) {
        let mut seed_max: f64 = 0.0;
        let mut centroid_max: f64 = 0.0;
        for (i, &c) in self.assignments.iter().enumerate() {
            seed_max = seed_max.max(distance(&data[i], &data[self.seeds[c]]));
            centroid_max = centroid_max.max(distance(&data[i], &self.centroids[c]));
        }
        (seed_max, centroid_max)
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Scans points in index order; each not-yet-clustered point founds a cluster
/// of every not-yet-clustered point within `epsilon` of it.
pub fn cluster_epsilon_ball(data: &[Vec<f64>], epsilon: f64) -> Result<ClusterSet> {
    cluster_with_categories(data, &vec![0; data.len()], epsilon)
}

/// ε-ball clustering that never mixes points of different categories.
pub fn cluster_with_categories(
    data: &[Vec<f64>],
    categories: &[usize],
    epsilon: f64,
) -> Result<ClusterSet> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    if data.len() != categories.len() {
        return Err(Error::InvalidConfig("one category per point is required".into()));
    }
    let n = data.len();
    let dim = data.first().map_or(0, Vec::len);
    // sort by the first coordinate so candidates form a contiguous window
    let key = |i: usize| data[i].first().copied().unwrap_or(0.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    let sorted_keys: Vec<f64> = order.iter().map(|&i| key(i)).collect();

    let unassigned = usize::MAX;
    let mut assignments = vec![unassigned; n];
    let mut centroids = Vec::new();
    let mut counts = Vec::new();
    let mut seeds = Vec::new();
    let mut cats = Vec::new();
    let eps2 = epsilon * epsilon;
    for i in 0..n {
        if assignments[i] != unassigned {
            continue;
        }
        let id = counts.len();
        let lo = sorted_keys.partition_point(|&v| v < key(i) - epsilon);
        let hi = sorted_keys.partition_point(|&v| v <= key(i) + epsilon);
        let mut members: Vec<usize> = order[lo..hi]
            .iter()
            .copied()
            .filter(|&k| {
                assignments[k] == unassigned
                    && categories[k] == categories[i]
                    && data[i]
                        .iter()
                        .zip(&data[k])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        <= eps2
            })
            .collect();
        members.sort_unstable();
        let mut centroid = vec![0.0; dim];
        for &k in &members {
            assignments[k] = id;
            for (c, v) in centroid.iter_mut().zip(&data[k]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= members.len() as f64);
        centroids.push(centroid);
        counts.push(members.len());
        seeds.push(i);
        cats.push(categories[i]);
    }
    Ok(ClusterSet {
        centroids,
        assignments,
        counts,
        seeds,
        categories: cats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pts(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn hand_traced_example() {
        let c = cluster_epsilon_ball(&pts(&[0.0, 0.1, 5.0]), 0.5).unwrap();
        assert_eq!(c.assignments, vec![0, 0, 1]);
        assert!((c.centroids[0][0] - 0.05).abs() < 1e-15);
        assert_eq!(c.centroids[1], vec![5.0]);
        assert_eq!(c.counts, vec![2, 1]);
    }

    #[test]
    fn wide_ball_gives_one_cluster_at_the_mean() {
        let data = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![1.0, 3.0]];
        let c = cluster_epsilon_ball(&data, 100.0).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.centroids[0][0] - 1.0).abs() < 1e-15);
        assert!((c.centroids[0][1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn narrow_ball_gives_singletons() {
        let data = pts(&[0.0, 1.0, 2.5, -4.0]);
        let c = cluster_epsilon_ball(&data, 0.5).unwrap();
        assert_eq!(c.len(), 4);
        for (i, centroid) in c.centroids.iter().enumerate() {
            assert_eq!(centroid, &data[c.seeds[i]]);
        }
    }

    #[test]
    fn categories_are_never_mixed() {
        let c = cluster_with_categories(&pts(&[0.0, 0.0, 0.1]), &[0, 1, 0], 1.0).unwrap();
        assert_eq!(c.assignments, vec![0, 1, 0]);
        assert_eq!(c.categories, vec![0, 1]);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        assert!(matches!(cluster_epsilon_ball(&pts(&[0.0]), 0.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let data = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(&data).unwrap();
        assert_eq!(s.apply(&data[0]), vec![-1.0, 0.0]);
        assert_eq!(s.apply(&data[1]), vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn partition_and_membership(
            raw in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..80),
            eps in 0.05f64..2.0,
        ) {
            let c = cluster_epsilon_ball(&raw, eps).unwrap();
            prop_assert_eq!(c.assignments.len(), raw.len());
            prop_assert_eq!(c.counts.iter().sum::<usize>(), raw.len());
            for (j, members) in c.members().iter().enumerate() {
                prop_assert_eq!(members.len(), c.counts[j]);
            }
            let (seed_radius, _) = c.membership_radii(&raw);
            prop_assert!(seed_radius <= eps);
        }
    }
}
