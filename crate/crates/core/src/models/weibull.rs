use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::{CostModel, Model};
use crate::error::{Error, Result};
use crate::estimator::SignSplit;

const PRIOR_VARIANCE: f64 = 10.0;

/// One subject's discrete-time survival history.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPanel {
    pub id: usize,
    /// Period endpoints `t_0 < t_1 < … < t_{n_i}`.
    pub endpoints: Vec<f64>,
    /// Event indicator per period.
    pub responses: Vec<u8>,
    /// Covariates per period.
    pub covariates: Vec<Vec<f64>>,
}

impl SubjectPanel {
    pub fn periods(&self) -> usize {
        self.responses.len()
    }

    pub fn validate(&self, covariate_dim: usize) -> Result<()> {
        let bad = |reason: String| Error::InvalidPanel {
            subject: self.id,
            reason,
        };
        let n = self.responses.len();
        if n == 0 {
            return Err(bad("no periods".into()));
        }
        if self.endpoints.len() != n + 1 || self.covariates.len() != n {
            return Err(bad(format!(
                "{} endpoints and {} covariate rows for {n} periods",
                self.endpoints.len(),
                self.covariates.len()
            )));
        }
        if self.endpoints[0] < 0.0 {
            return Err(bad("negative start time".into()));
        }
        if let Some(w) = self.endpoints.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(bad(format!("period endpoints {} → {} are not increasing", w[0], w[1])));
        }
        if let Some(&y) = self.responses.iter().find(|&&y| y > 1) {
            return Err(bad(format!("response {y} is not binary")));
        }
        if let Some(row) = self.covariates.iter().find(|r| r.len() != covariate_dim) {
            return Err(bad(format!(
                "covariate row of length {} where {covariate_dim} expected",
                row.len()
            )));
        }
        Ok(())
    }
}

/// Per-period terms that do not depend on the random effect:
/// `a_j = exp(x_jᵀβ_λ) (t_j^ρ - t_{j-1}^ρ)`, so that `λ_j Δ_j = e^γ a_j`.
fn period_rates(theta: &[f64], panel: &SubjectPanel) -> Vec<f64> {
    let d = panel.covariates.first().map_or(0, Vec::len);
    let (beta_lambda, beta_rho) = (&theta[..d], &theta[d..2 * d]);
    panel
        .covariates
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let dot = |b: &[f64]| x.iter().zip(b).map(|(a, c)| a * c).sum::<f64>();
            let rho = dot(beta_rho).exp();
            let delta = panel.endpoints[j + 1].powf(rho) - panel.endpoints[j].powf(rho);
            dot(beta_lambda).exp() * delta
        })
        .collect()
}

/// `log p(y_i | θ, γ)` with `P(y = 1) = exp(-λΔ)`.
fn conditional_loglik(rates: &[f64], responses: &[u8], gamma: f64) -> f64 {
    let scale = gamma.exp();
    rates
        .iter()
        .zip(responses)
        .map(|(&a, &y)| {
            let x = scale * a;
            if y == 1 {
                -x
            } else {
                (-(-x).exp_m1()).ln()
            }
        })
        .sum()
}

/// Marginal log-likelihood of one subject, integrating the random effect
/// `γ ~ N(0, τ²)` with the trapezoidal rule. The grid has spacing `h τ` and
/// covers at least `[-W τ, W τ]`.
pub fn weibull_subject_contribution(
    theta: &[f64],
    panel: &SubjectPanel,
    step_h: f64,
    halfwidth: f64,
) -> Result<f64> {
    if !(step_h > 0.0) || !(halfwidth > 0.0) {
        return Err(Error::InvalidParams(format!(
            "integration step {step_h} and half-width {halfwidth} must be positive"
        )));
    }
    let d = panel.covariates.first().map_or(0, Vec::len);
    if theta.len() != 2 * d + 1 {
        return Err(Error::InvalidParams(format!(
            "expected {} parameters, got {}",
            2 * d + 1,
            theta.len()
        )));
    }
    panel.validate(d)?;
    Ok(integrate(theta, panel, step_h, halfwidth))
}

fn integrate(theta: &[f64], panel: &SubjectPanel, step_h: f64, halfwidth: f64) -> f64 {
    let rates = period_rates(theta, panel);
    let log_tau2 = theta[theta.len() - 1];
    let tau = (0.5 * log_tau2).exp();
    let intervals = (2.0 * halfwidth / step_h).ceil() as usize;
    let delta = step_h * tau;
    let start = -0.5 * intervals as f64 * delta;
    let log_norm = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_tau2;

    // streaming log-sum-exp over the trapezoid nodes
    let mut max = f64::NEG_INFINITY;
    let mut acc = 0.0;
    for i in 0..=intervals {
        let gamma = start + i as f64 * delta;
        let weight: f64 = if i == 0 || i == intervals { 0.5 } else { 1.0 };
        let z = gamma / tau;
        let term = conditional_loglik(&rates, &panel.responses, gamma) + log_norm - 0.5 * z * z
            + weight.ln();
        if term == f64::NEG_INFINITY {
            continue;
        }
        if term > max {
            acc = acc * (max - term).exp() + 1.0;
            max = term;
        } else {
            acc += (term - max).exp();
        }
    }
    max + acc.ln() + delta.ln()
}

/// Weibull discrete-time survival model with a normal random effect per subject.
/// θ = (β_λ, β_ρ, log τ²) with a `N(0, 10 I)` prior.
#[derive(Debug, Clone)]
pub struct WeibullModel {
    panels: Vec<SubjectPanel>,
    covariate_dim: usize,
    step_h: f64,
    proxy_step: f64,
    halfwidth: f64,
}

impl WeibullModel {
    pub const DEFAULT_STEP: f64 = 0.01;
    pub const DEFAULT_PROXY_STEP: f64 = 0.5;
    pub const DEFAULT_HALFWIDTH: f64 = 6.0;

    pub fn new(panels: Vec<SubjectPanel>) -> Result<Self> {
        let covariate_dim = panels
            .first()
            .and_then(|p| p.covariates.first())
            .map(Vec::len)
            .ok_or(Error::EmptyPopulation)?;
        for p in &panels {
            p.validate(covariate_dim)?;
        }
        Ok(Self {
            panels,
            covariate_dim,
            step_h: Self::DEFAULT_STEP,
            proxy_step: Self::DEFAULT_PROXY_STEP,
            halfwidth: Self::DEFAULT_HALFWIDTH,
        })
    }

    pub fn with_integration(mut self, step_h: f64, proxy_step: f64, halfwidth: f64) -> Result<Self> {
        if !(step_h > 0.0 && proxy_step > 0.0 && halfwidth > 0.0) {
            return Err(Error::InvalidParams(
                "integration steps and half-width must be positive".into(),
            ));
        }
        self.step_h = step_h;
        self.proxy_step = proxy_step;
        self.halfwidth = halfwidth;
        Ok(self)
    }

    /// Simulates `subjects` panels with unit-length periods and covariates
    /// `(1, N(0,1))`. Each subject is followed until its first event or for
    /// `max_periods` periods.
    pub fn generate<R: Rng + ?Sized>(
        theta: &[f64],
        subjects: usize,
        max_periods: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if subjects == 0 {
            return Err(Error::EmptyPopulation);
        }
        if theta.len() != 5 {
            return Err(Error::InvalidParams(format!(
                "generator expects θ = (β_λ0, β_λ1, β_ρ0, β_ρ1, log τ²), got {} values",
                theta.len()
            )));
        }
        if max_periods == 0 {
            return Err(Error::InvalidParams("max_periods must be positive".into()));
        }
        let tau = (0.5 * theta[4]).exp();
        let effect = Normal::new(0.0, tau).map_err(|e| Error::InvalidParams(e.to_string()))?;
        let mut panels = Vec::with_capacity(subjects);
        for id in 0..subjects {
            let gamma = effect.sample(rng);
            let mut panel = SubjectPanel {
                id,
                endpoints: vec![0.0],
                responses: Vec::new(),
                covariates: Vec::new(),
            };
            for j in 1..=max_periods {
                let x = vec![1.0, StandardNormal.sample(rng)];
                let rho = (theta[2] * x[0] + theta[3] * x[1]).exp();
                let lambda = (gamma + theta[0] * x[0] + theta[1] * x[1]).exp();
                let t0 = (j - 1) as f64;
                let t1 = j as f64;
                let hazard = (-lambda * (t1.powf(rho) - t0.powf(rho))).exp();
                let y = u8::from(rng.random::<f64>() < hazard);
                panel.endpoints.push(t1);
                panel.responses.push(y);
                panel.covariates.push(x);
                if y == 1 {
                    break;
                }
            }
            panels.push(panel);
        }
        Self::new(panels)
    }

    pub fn panels(&self) -> &[SubjectPanel] {
        &self.panels
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn step(&self) -> f64 {
        self.step_h
    }

    pub fn proxy_step(&self) -> f64 {
        self.proxy_step
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn contribution_with_step(&self, theta: &[f64], k: usize, step_h: f64) -> f64 {
        integrate(theta, &self.panels[k], step_h, self.halfwidth)
    }
}

impl Model for WeibullModel {
    fn name(&self) -> &str {
        "weibull"
    }

    fn population_size(&self) -> usize {
        self.panels.len()
    }

    fn dim(&self) -> usize {
        2 * self.covariate_dim + 1
    }

    fn param_names(&self) -> Vec<String> {
        let d = self.covariate_dim;
        (0..d)
            .map(|j| format!("beta_lambda{j}"))
            .chain((0..d).map(|j| format!("beta_rho{j}")))
            .chain(std::iter::once("log_tau2".to_string()))
            .collect()
    }

    fn contribution(&self, theta: &[f64], k: usize) -> f64 {
        integrate(theta, &self.panels[k], self.step_h, self.halfwidth)
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let norm = -0.5 * (2.0 * std::f64::consts::PI * PRIOR_VARIANCE).ln();
        theta
            .iter()
            .map(|b| norm - b * b / (2.0 * PRIOR_VARIANCE))
            .sum()
    }

    /// Marginal log-probabilities of binary histories are nonpositive up to
    /// integration error.
    fn sign_split(&self, theta: &[f64], k: usize) -> Option<SignSplit> {
        Some(SignSplit {
            shifted_contribution: self.contribution(theta, k),
            shift: 0.0,
        })
    }

    fn proxy_contribution(&self, theta: &[f64], k: usize) -> Option<f64> {
        Some(integrate(theta, &self.panels[k], self.proxy_step, self.halfwidth))
    }

    fn cost_model(&self) -> CostModel {
        CostModel::WallTime
    }
}
