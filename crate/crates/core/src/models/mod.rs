//! Statistical models exposing per-element log-likelihood contributions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimator::SignSplit;

pub mod ar1;
pub mod data;
pub mod logistic;
pub mod normal;
pub mod weibull;

pub use ar1::{Ar1Model, Ar1Parameterization};
pub use logistic::LogisticModel;
pub use normal::NormalModel;
pub use weibull::{SubjectPanel, WeibullModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostModel {
    EvaluationCount,
    WallTime,
}

/// Value, gradient and Hessian of `l(z; θ)` with respect to the data point `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataDerivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// A model's log-likelihood seen as a function of the data point.
///
/// Elements are grouped by `category` (for instance the value of a binary
/// response); points of different categories are never clustered together.
pub trait DataSpace: Send + Sync {
    fn data_dim(&self) -> usize;

    fn category(&self, _k: usize) -> usize {
        0
    }

    /// Raw (unstandardized) data point of element `k`.
    fn point(&self, k: usize) -> Vec<f64>;

    fn loglik_at(&self, theta: &[f64], category: usize, z: &[f64]) -> f64;

    fn derivatives(&self, theta: &[f64], category: usize, z: &[f64]) -> Result<DataDerivatives>;
}

pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    /// Number of likelihood elements `n`.
    fn population_size(&self) -> usize;

    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    /// `l_k(θ)`.
    fn contribution(&self, theta: &[f64], k: usize) -> f64;

    fn log_prior(&self, theta: &[f64]) -> f64;

    /// `Σ_k l_k(θ)`, summed in element order.
    fn full_loglik(&self, theta: &[f64]) -> f64 {
        (0..self.population_size())
            .map(|k| self.contribution(theta, k))
            .sum()
    }

    fn log_posterior(&self, theta: &[f64]) -> f64 {
        let lp = self.log_prior(theta);
        if lp == f64::NEG_INFINITY {
            return lp;
        }
        lp + self.full_loglik(theta)
    }

    fn sign_split(&self, _theta: &[f64], _k: usize) -> Option<SignSplit> {
        None
    }

    /// Elements that are always evaluated exactly and never subsampled.
    fn always_evaluate(&self) -> Vec<usize> {
        Vec::new()
    }

    fn data_space(&self) -> Option<&dyn DataSpace> {
        None
    }

    /// Cheap approximation of `l_k(θ)` from a cruder numerical method, if any.
    fn proxy_contribution(&self, _theta: &[f64], _k: usize) -> Option<f64> {
        None
    }

    fn cost_model(&self) -> CostModel {
        CostModel::EvaluationCount
    }
}

/// Elements split into the always-evaluated set and the subsampling frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub always: Vec<usize>,
    pub frame: Vec<usize>,
}

impl Population {
    pub fn of(model: &dyn Model) -> Self {
        let n = model.population_size();
        let mut always = model.always_evaluate();
        always.sort_unstable();
        always.dedup();
        let mut is_always = vec![false; n];
        for &k in &always {
            is_always[k] = true;
        }
        let frame = (0..n).filter(|&k| !is_always[k]).collect();
        Self { always, frame }
    }

    pub fn always_sum(&self, model: &dyn Model, theta: &[f64]) -> f64 {
        self.always.iter().map(|&k| model.contribution(theta, k)).sum()
    }

    pub fn frame_sum(&self, model: &dyn Model, theta: &[f64]) -> f64 {
        self.frame.iter().map(|&k| model.contribution(theta, k)).sum()
    }
}

/// `log(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function, stable for large `|x|`.
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
