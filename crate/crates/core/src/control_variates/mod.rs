//! Control variates `q_k` and sampling weights.

use crate::error::{Error, Result};
use crate::models::{Model, Population};

pub mod cluster;
pub mod glm;
pub mod sidecar;
pub mod surface;
pub mod taylor;

pub use cluster::{cluster_epsilon_ball, cluster_with_categories, ClusterSet, Standardizer};
pub use surface::{fit_surface, predict_surface, SurfaceConfig, SurfaceFit, SurfaceMethod, SurfaceVariates};
pub use taylor::{precompute_centroid_statistics, proxy_total, taylor_proxy, CentroidSummary, TaylorVariates};

/// Control variates evaluated at one θ.
pub trait PreparedVariates {
    /// `q = Σ_k q_k` over the sampling frame.
    fn total(&self) -> f64;
    /// Evaluations spent preparing `q`.
    fn cost(&self) -> u64;
    /// `q_k` for element id `k` of the frame.
    fn variate(&self, k: usize) -> f64;
}

pub trait ControlVariates: Send + Sync {
    fn name(&self) -> &str;

    fn prepare<'a>(&'a self, model: &dyn Model, theta: &[f64]) -> Result<Box<dyn PreparedVariates + 'a>>;

    /// Whether `|q_k|` may serve as a sampling weight.
    fn suitable_for_weights(&self) -> bool {
        true
    }
}

/// `q_k = c` for every element.
#[derive(Debug, Clone, Copy)]
pub struct ConstantVariates {
    pub value: f64,
    pub frame_size: usize,
}

impl PreparedVariates for ConstantVariates {
    fn total(&self) -> f64 {
        self.value * self.frame_size as f64
    }

    fn cost(&self) -> u64 {
        0
    }

    fn variate(&self, _k: usize) -> f64 {
        self.value
    }
}

/// No control variates: the estimator reduces to Hansen-Hurwitz.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroVariates;

impl ControlVariates for ZeroVariates {
    fn name(&self) -> &str {
        "none"
    }

    fn prepare<'a>(&'a self, _model: &dyn Model, _theta: &[f64]) -> Result<Box<dyn PreparedVariates + 'a>> {
        Ok(Box::new(ConstantVariates {
            value: 0.0,
            frame_size: 0,
        }))
    }

    fn suitable_for_weights(&self) -> bool {
        false
    }
}

struct Dense {
    values: Vec<f64>,
    total: f64,
    cost: u64,
}

impl PreparedVariates for Dense {
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

/// `q_k = l_k`, evaluated over the whole frame. The total is summed in frame
/// order, the same order the exact likelihood uses.
#[derive(Debug, Clone)]
pub struct PerfectVariates {
    population: Population,
}

impl PerfectVariates {
    pub fn new(population: Population) -> Self {
        Self { population }
    }
}

impl ControlVariates for PerfectVariates {
    fn name(&self) -> &str {
        "perfect"
    }

    fn prepare<'a>(&'a self, model: &dyn Model, theta: &[f64]) -> Result<Box<dyn PreparedVariates + 'a>> {
        let mut values = vec![0.0; model.population_size()];
        for &k in &self.population.frame {
            values[k] = model.contribution(theta, k);
        }
        let total = self.population.frame.iter().map(|&k| values[k]).sum();
        Ok(Box::new(Dense {
            values,
            total,
            cost: self.population.frame.len() as u64,
        }))
    }
}

/// The model's own cheap approximation, e.g. a coarser integration grid.
/// Proxy evaluations are not exact contributions and are declared at zero
/// cost; wall-time accounting captures them.
#[derive(Debug, Clone)]
pub struct NumericVariates {
    population: Population,
}

impl NumericVariates {
    pub fn new(model: &dyn Model, population: Population) -> Result<Self> {
        if let Some(&k) = population.frame.first() {
            if model.proxy_contribution(&vec![0.0; model.dim()], k).is_none() {
                return Err(Error::Unsupported(format!(
                    "model `{}` has no numerical proxy",
                    model.name()
                )));
            }
        }
        Ok(Self { population })
    }
}

impl ControlVariates for NumericVariates {
    fn name(&self) -> &str {
        "numeric"
    }

    fn prepare<'a>(&'a self, model: &dyn Model, theta: &[f64]) -> Result<Box<dyn PreparedVariates + 'a>> {
        let mut values = vec![0.0; model.population_size()];
        for &k in &self.population.frame {
            values[k] = model.proxy_contribution(theta, k).ok_or_else(|| {
                Error::Unsupported(format!("model `{}` has no numerical proxy", model.name()))
            })?;
        }
        let total = self.population.frame.iter().map(|&k| values[k]).sum();
        Ok(Box::new(Dense {
            values,
            total,
            cost: 0,
        }))
    }
}

/// PPS weights over the frame from proxy values: `|q̃_k - d|` with the
/// model's sign-split shift `d` (zero without a split). Zero weights are
/// floored at `1e-12` times the largest weight.
pub fn pps_weights(proxy: &dyn PreparedVariates, frame: &[usize], shift: f64) -> Result<Vec<f64>> {
    let mut w: Vec<f64> = frame.iter().map(|&k| (proxy.variate(k) - shift).abs()).collect();
    let max = w.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || !max.is_finite() {
        return Err(Error::InvalidDesign(format!(
            "proxy weights are degenerate (largest {max})"
        )));
    }
    let floor = 1e-12 * max;
    for v in &mut w {
        if *v < floor {
            *v = floor;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::LogisticModel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_total_matches_frame_sum_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = LogisticModel::generate(&[0.0, 1.0], 500, &mut rng).unwrap();
        let pop = Population::of(&model);
        let cv = PerfectVariates::new(pop.clone());
        let theta = [0.3, -0.2];
        let prepared = cv.prepare(&model, &theta).unwrap();
        assert_eq!(prepared.total(), pop.frame_sum(&model, &theta));
        assert_eq!(prepared.cost(), pop.frame.len() as u64);
    }

    #[test]
    fn weights_are_floored() {
        let proxy = Dense {
            values: vec![-2.0, 0.0, -1.0],
            total: -3.0,
            cost: 0,
        };
        let w = pps_weights(&proxy, &[0, 1, 2], 0.0).unwrap();
        assert_eq!(w, vec![2.0, 2e-12, 1.0]);
        let zero = Dense {
            values: vec![0.0; 3],
            total: 0.0,
            cost: 0,
        };
        assert!(pps_weights(&zero, &[0, 1, 2], 0.0).is_err());
    }
}
