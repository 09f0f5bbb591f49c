//! Pseudo-marginal Metropolis-Hastings on the augmented `(θ, u)` space.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::acceptance::{log_acceptance_ratio, RatioInputs};
use super::adapt::{AdaptationBatch, ScaleAdapter};
use super::proposal::{imh_propose, rwm_propose, ProposalFactor};
use crate::control_variates::{pps_weights, ConstantVariates, ControlVariates, PreparedVariates};
use crate::error::{Error, Result};
use crate::estimator::{adaptive_sample_size, bias_corrected_log_likelihood, estimate_loglik, LogLikEstimate};
use crate::models::{CostModel, Model, Population};
use crate::sampling::{
    draw_indicators, draw_pps_from, draw_srs, propose_correlated_indicators, propose_infrequent,
    CorrelationParams, PpsTable, Subsample,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    Rwm,
    Imh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Full-data likelihood; ordinary Metropolis-Hastings.
    Exact,
    /// Difference estimator with simple random sampling.
    DeSrs,
    /// Hansen-Hurwitz with probability-proportional-to-size sampling.
    HhPps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Total iterations, burn-in included.
    pub iterations: usize,
    pub burn_in_fraction: f64,
    pub proposal: ProposalKind,
    pub estimator: EstimatorKind,
    /// Draws per estimate (initial size when `v_max` is set).
    pub subsample_size: usize,
    /// Probability of refreshing the subsample after burn-in.
    pub omega: f64,
    pub correlation: Option<CorrelationParams>,
    /// Variance cap for adaptive subsample sizes.
    pub v_max: Option<f64>,
    pub max_adaptation_rounds: usize,
    /// Variance the subsample size was chosen for; recorded, not enforced.
    pub target_sigma2: f64,
    pub target_acceptance: f64,
    /// Initial random-walk scale; `None` gives `2.38 / √d`.
    pub initial_scale: Option<f64>,
    pub adaptation_batch: usize,
    pub imh_dof: f64,
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            burn_in_fraction: 0.1,
            proposal: ProposalKind::Rwm,
            estimator: EstimatorKind::DeSrs,
            subsample_size: 100,
            omega: 1.0,
            correlation: None,
            v_max: None,
            max_adaptation_rounds: 10,
            target_sigma2: 1.0,
            target_acceptance: 0.15,
            initial_scale: None,
            adaptation_batch: 50,
            imh_dof: 10.0,
            seed: 0,
        }
    }
}

impl EngineConfig {
    pub fn burn_in(&self) -> usize {
        (self.burn_in_fraction * self.iterations as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad(format!("burn-in fraction {} outside [0, 1)", self.burn_in_fraction));
        }
        if !(self.omega > 0.0 && self.omega <= 1.0) {
            return bad(format!("omega {} outside (0, 1]", self.omega));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return bad(format!("target acceptance {} outside (0, 1)", self.target_acceptance));
        }
        if let Some(s) = self.initial_scale {
            if !(s > 0.0) {
                return bad(format!("initial scale {s} must be positive"));
            }
        }
        if !(self.imh_dof > 0.0) {
            return bad("IMH degrees of freedom must be positive".into());
        }
        if let Some(v) = self.v_max {
            if !(v > 0.0) {
                return Err(Error::InvalidTolerance(format!("v_max must be positive, got {v}")));
            }
        }
        match self.estimator {
            EstimatorKind::Exact => {}
            EstimatorKind::DeSrs | EstimatorKind::HhPps => {
                if self.correlation.is_none() && self.subsample_size < 2 {
                    return bad("subsample size must be at least 2".into());
                }
            }
        }
        if self.proposal == ProposalKind::Imh && self.estimator != EstimatorKind::DeSrs {
            return bad("the independence proposal is only offered with DE-SRS".into());
        }
        if self.correlation.is_some() {
            if self.estimator != EstimatorKind::DeSrs {
                return bad("correlated subsamples require DE-SRS".into());
            }
            if self.v_max.is_some() {
                return bad("correlated subsamples and adaptive sizes are not combined".into());
            }
        }
        if self.estimator == EstimatorKind::HhPps && self.omega < 1.0 {
            return bad("PPS subsamples are redrawn every iteration; omega must be 1".into());
        }
        Ok(())
    }
}

/// Everything a chain needs besides its configuration.
pub struct ChainSetup<'a> {
    pub model: &'a dyn Model,
    /// Control variates for DE-SRS.
    pub variates: &'a dyn ControlVariates,
    /// Proxy whose magnitudes give the PPS weights.
    pub weights: Option<&'a dyn ControlVariates>,
    pub theta_start: Vec<f64>,
    /// Center of the independence proposal.
    pub theta_star: Vec<f64>,
    /// Proposal covariance.
    pub sigma_star: DMatrix<f64>,
}

/// Independent streams for θ-proposals, subsample draws and accept decisions.
pub struct Streams {
    pub theta: ChaCha8Rng,
    pub subsample: ChaCha8Rng,
    pub accept: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self {
            theta: stream(0),
            subsample: stream(1),
            accept: stream(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    /// `None` for the exact likelihood.
    pub subsample: Option<Subsample>,
    pub cached_log_phat: f64,
    pub cached_log_prior: f64,
    /// Times `cached_log_phat` was computed for this `(θ, u)`.
    pub evaluations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub accepted: bool,
    /// Draws behind the proposed estimate (`n` for the exact likelihood).
    pub subsample_size: usize,
    /// Variance estimate at the proposal after adaptation.
    pub sigma2: f64,
    pub sigma2_before_adaptation: f64,
    pub adaptation_rounds: usize,
    /// Adaptation stopped at the round limit with the variance above `v_max`.
    pub flagged: bool,
    pub refreshed: bool,
    /// Contribution evaluations spent in this iteration.
    pub evaluations: u64,
}

struct Evaluated {
    log_phat: f64,
    subsample: Option<Subsample>,
    subsample_size: usize,
    sigma2: f64,
    sigma2_before: f64,
    rounds: usize,
    flagged: bool,
    evaluations: u64,
}

pub struct Sampler<'a> {
    setup: ChainSetup<'a>,
    config: EngineConfig,
    population: Population,
    factor: ProposalFactor,
    adapter: ScaleAdapter,
    streams: Streams,
    estimator_calls: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(setup: ChainSetup<'a>, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let d = setup.model.dim();
        if setup.theta_start.len() != d || setup.theta_star.len() != d {
            return Err(Error::InvalidConfig(format!("parameter vectors must have length {d}")));
        }
        if setup.sigma_star.nrows() != d {
            return Err(Error::InvalidConfig(format!("proposal covariance must be {d}×{d}")));
        }
        if config.estimator == EstimatorKind::HhPps && setup.weights.is_none() {
            return Err(Error::InvalidConfig("PPS sampling needs a weight proxy".into()));
        }
        if let Some(w) = setup.weights {
            if !w.suitable_for_weights() {
                return Err(Error::InvalidConfig(format!(
                    "`{}` proxies cannot serve as sampling weights",
                    w.name()
                )));
            }
        }
        let population = Population::of(setup.model);
        if config.estimator != EstimatorKind::Exact && population.frame.len() < 2 {
            return Err(Error::InsufficientSample {
                needed: 2,
                got: population.frame.len(),
            });
        }
        let factor = ProposalFactor::new(&setup.sigma_star)?;
        let scale = config.initial_scale.unwrap_or(2.38 / (d as f64).sqrt());
        let adapter = ScaleAdapter::new(scale, config.target_acceptance, config.adaptation_batch);
        let streams = Streams::new(config.seed);
        Ok(Self {
            setup,
            config,
            population,
            factor,
            adapter,
            streams,
            estimator_calls: 0,
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn scale(&self) -> f64 {
        self.adapter.scale()
    }

    /// Number of likelihood estimates computed so far.
    pub fn estimator_calls(&self) -> u64 {
        self.estimator_calls
    }

    fn frame_len(&self) -> usize {
        self.population.frame.len()
    }

    fn fresh_srs(&mut self, m: usize) -> Result<Subsample> {
        let frame = &self.population.frame;
        Ok(draw_srs(frame.len(), m, &mut self.streams.subsample)?.remap(frame))
    }

    fn initial_subsample(&mut self) -> Result<Option<Subsample>> {
        match self.config.estimator {
            EstimatorKind::Exact | EstimatorKind::HhPps => Ok(None),
            EstimatorKind::DeSrs => match self.config.correlation {
                Some(c) => {
                    let bits = draw_indicators(self.frame_len(), c.fraction, &mut self.streams.subsample)?;
                    Ok(Some(bits.remap(&self.population.frame)))
                }
                None => self.fresh_srs(self.config.subsample_size).map(Some),
            },
        }
    }

    /// Estimate, then grow the subsample while the variance exceeds `v_max`.
    fn estimate_with_adaptation(
        &mut self,
        theta: &[f64],
        mut u: Subsample,
        prepared: &dyn PreparedVariates,
        adapt: bool,
        redraw: &mut dyn FnMut(&mut Self, usize) -> Result<Subsample>,
    ) -> Result<(LogLikEstimate, Subsample, usize, f64, bool, u64)> {
        let model = self.setup.model;
        let mut est = estimate_loglik(model, theta, &u, prepared)?;
        let mut evaluations = est.cost;
        let before = est.variance;
        let mut rounds = 0;
        let mut flagged = false;
        if let (true, Some(v_max)) = (adapt, self.config.v_max) {
            while est.variance > v_max {
                if rounds == self.config.max_adaptation_rounds {
                    flagged = true;
                    break;
                }
                let m = adaptive_sample_size(&est, v_max, self.frame_len())?;
                if m <= est.subsample_size {
                    flagged = true;
                    break;
                }
                u = redraw(self, m)?;
                est = estimate_loglik(model, theta, &u, prepared)?;
                evaluations += est.subsample_size as u64;
                rounds += 1;
            }
        }
        Ok((est, u, rounds, before, flagged, evaluations))
    }

    fn evaluate(&mut self, theta: &[f64], proposed_u: Option<Subsample>, refreshed: bool) -> Result<Evaluated> {
        self.estimator_calls += 1;
        let model = self.setup.model;
        let always = self.population.always_sum(model, theta);
        let always_cost = self.population.always.len() as u64;
        match self.config.estimator {
            EstimatorKind::Exact => {
                let frame_sum = self.population.frame_sum(model, theta);
                Ok(Evaluated {
                    log_phat: always + frame_sum,
                    subsample: None,
                    subsample_size: model.population_size(),
                    sigma2: 0.0,
                    sigma2_before: 0.0,
                    rounds: 0,
                    flagged: false,
                    evaluations: model.population_size() as u64,
                })
            }
            EstimatorKind::DeSrs => {
                let u = proposed_u.expect("DE-SRS proposals carry a subsample");
                if u.len() < 2 {
                    // an indicator draw with fewer than two elements cannot
                    // estimate its own variance; the proposal is rejected
                    return Ok(Evaluated {
                        log_phat: f64::NEG_INFINITY,
                        subsample_size: u.len(),
                        subsample: Some(u),
                        sigma2: f64::NAN,
                        sigma2_before: f64::NAN,
                        rounds: 0,
                        flagged: true,
                        evaluations: always_cost,
                    });
                }
                let variates = self.setup.variates;
                let prepared = variates.prepare(model, theta)?;
                let adapt = refreshed && self.config.correlation.is_none();
                let (est, u, rounds, before, flagged, evals) = self.estimate_with_adaptation(
                    theta,
                    u,
                    prepared.as_ref(),
                    adapt,
                    &mut |s: &mut Self, m| s.fresh_srs(m),
                )?;
                Ok(Evaluated {
                    log_phat: always + bias_corrected_log_likelihood(&est),
                    subsample_size: u.len(),
                    subsample: Some(u),
                    sigma2: est.variance,
                    sigma2_before: before,
                    rounds,
                    flagged,
                    evaluations: evals + always_cost,
                })
            }
            EstimatorKind::HhPps => {
                let weights = self.setup.weights.expect("checked at construction");
                let proxy = weights.prepare(model, theta)?;
                let frame = self.population.frame.clone();
                let shift = model.sign_split(theta, frame[0]).map_or(0.0, |s| s.shift);
                let w = pps_weights(proxy.as_ref(), &frame, shift)?;
                let table = PpsTable::new(&w)?;
                let constant = ConstantVariates {
                    value: shift,
                    frame_size: frame.len(),
                };
                let m = self.config.subsample_size;
                let u = draw_pps_from(&table, m, &mut self.streams.subsample)?.remap(&frame);
                let (est, u, rounds, before, flagged, evals) = self.estimate_with_adaptation(
                    theta,
                    u,
                    &constant,
                    true,
                    &mut |s: &mut Self, m| Ok(draw_pps_from(&table, m, &mut s.streams.subsample)?.remap(&frame)),
                )?;
                Ok(Evaluated {
                    log_phat: always + bias_corrected_log_likelihood(&est),
                    subsample_size: u.len(),
                    subsample: Some(u),
                    sigma2: est.variance,
                    sigma2_before: before,
                    rounds,
                    flagged,
                    evaluations: evals + always_cost + proxy.cost(),
                })
            }
        }
    }

    pub fn initial_state(&mut self) -> Result<ChainState> {
        let theta = self.setup.theta_start.clone();
        let log_prior = self.setup.model.log_prior(&theta);
        if !log_prior.is_finite() {
            return Err(Error::InvalidParams("starting point is outside the prior support".into()));
        }
        let u = self.initial_subsample()?;
        let ev = self.evaluate(&theta, u, true)?;
        if !ev.log_phat.is_finite() {
            return Err(Error::InvalidParams(
                "likelihood estimate at the starting point is not finite".into(),
            ));
        }
        Ok(ChainState {
            theta,
            subsample: ev.subsample,
            cached_log_phat: ev.log_phat,
            cached_log_prior: log_prior,
            evaluations: 1,
        })
    }

    fn propose_subsample(&mut self, current: &Option<Subsample>, burn_in: bool) -> Result<(Option<Subsample>, bool)> {
        match self.config.estimator {
            EstimatorKind::Exact | EstimatorKind::HhPps => Ok((None, true)),
            EstimatorKind::DeSrs => {
                let current = current.as_ref().expect("DE-SRS states carry a subsample");
                if let Some(params) = self.config.correlation {
                    let next = propose_correlated_indicators(current, &params, &mut self.streams.subsample)?;
                    return Ok((Some(next.remap(&self.population.frame)), true));
                }
                let omega = if burn_in { 1.0 } else { self.config.omega };
                let frame = self.population.frame.clone();
                let m = self.config.subsample_size;
                let (u, refreshed) = propose_infrequent(
                    current,
                    omega,
                    |rng| Ok(draw_srs(frame.len(), m, rng)?.remap(&frame)),
                    &mut self.streams.subsample,
                )?;
                Ok((Some(u), refreshed))
            }
        }
    }

    /// One iteration. The current state's cached estimate is reused, never
    /// recomputed.
    pub fn pm_mh_step(&mut self, state: ChainState, burn_in: bool) -> Result<(ChainState, StepRecord)> {
        let model = self.setup.model;
        let log_u: f64 = self.streams.accept.random::<f64>().ln();
        let (theta_p, log_q_forward, log_q_reverse) = match self.config.proposal {
            ProposalKind::Rwm => (
                rwm_propose(&state.theta, self.adapter.scale(), &self.factor, &mut self.streams.theta),
                0.0,
                0.0,
            ),
            ProposalKind::Imh => {
                let (p, lp, lc) = imh_propose(
                    &self.setup.theta_star,
                    &state.theta,
                    &self.factor,
                    self.config.imh_dof,
                    &mut self.streams.theta,
                )?;
                (p, lp, lc)
            }
        };
        let log_prior_p = model.log_prior(&theta_p);
        let mut record = StepRecord {
            accepted: false,
            subsample_size: 0,
            sigma2: f64::NAN,
            sigma2_before_adaptation: f64::NAN,
            adaptation_rounds: 0,
            flagged: false,
            refreshed: false,
            evaluations: 0,
        };
        if log_prior_p == f64::NEG_INFINITY || log_prior_p.is_nan() {
            return Ok((state, record));
        }
        let (u_p, refreshed) = self.propose_subsample(&state.subsample, burn_in)?;
        let ev = self.evaluate(&theta_p, u_p, refreshed)?;
        record.subsample_size = ev.subsample_size;
        record.sigma2 = ev.sigma2;
        record.sigma2_before_adaptation = ev.sigma2_before;
        record.adaptation_rounds = ev.rounds;
        record.flagged = ev.flagged;
        record.refreshed = refreshed;
        record.evaluations = ev.evaluations;
        let log_alpha = log_acceptance_ratio(&RatioInputs {
            log_phat_proposed: ev.log_phat,
            log_phat_current: state.cached_log_phat,
            log_prior_proposed: log_prior_p,
            log_prior_current: state.cached_log_prior,
            log_q_forward,
            log_q_reverse,
            log_pu_proposed: 0.0,
            log_pu_current: 0.0,
            omega: self.config.omega,
            same_subsample: !refreshed,
        });
        if ev.log_phat.is_finite() && log_u < log_alpha {
            record.accepted = true;
            let next = ChainState {
                theta: theta_p,
                subsample: ev.subsample,
                cached_log_phat: ev.log_phat,
                cached_log_prior: log_prior_p,
                evaluations: 1,
            };
            Ok((next, record))
        } else {
            Ok((state, record))
        }
    }
}

/// θ draws and per-iteration records of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    pub param_names: Vec<String>,
    pub burn_in: usize,
    pub draws: Vec<Vec<f64>>,
    pub records: Vec<StepRecord>,
    pub population_size: usize,
    pub final_scale: f64,
    pub adaptation: Vec<AdaptationBatch>,
    pub estimator_calls: u64,
    /// Largest number of times any retained state's estimate was computed.
    pub max_state_evaluations: u32,
    pub cost_model: CostModel,
    pub burn_in_seconds: f64,
    pub sampling_seconds: f64,
}

impl Trace {
    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    fn sampling_range(&self) -> std::ops::Range<usize> {
        self.burn_in.min(self.len())..self.len()
    }

    /// Post-burn-in draws of parameter `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws[self.sampling_range()].iter().map(|d| d[j]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        let r = &self.records[self.sampling_range()];
        r.iter().filter(|s| s.accepted).count() as f64 / r.len().max(1) as f64
    }

    /// Mean of `m / n` over post-burn-in proposals that were estimated.
    pub fn mean_sampling_fraction(&self) -> f64 {
        let r: Vec<&StepRecord> = self.records[self.sampling_range()]
            .iter()
            .filter(|s| s.evaluations > 0)
            .collect();
        let n = self.population_size as f64;
        r.iter().map(|s| s.subsample_size as f64 / n).sum::<f64>() / r.len().max(1) as f64
    }

    /// Contribution evaluations after burn-in.
    pub fn sampling_evaluations(&self) -> u64 {
        self.records[self.sampling_range()].iter().map(|s| s.evaluations).sum()
    }

    /// Post-burn-in cost under the model's cost model (evaluations or seconds).
    pub fn sampling_cost(&self) -> f64 {
        match self.cost_model {
            CostModel::EvaluationCount => self.sampling_evaluations() as f64,
            CostModel::WallTime => self.sampling_seconds,
        }
    }

    /// One row per iteration: draw, acceptance, subsample size, variance
    /// estimate, adaptation rounds and cumulative evaluations.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "phase".to_string()];
        header.extend(self.param_names.iter().cloned());
        header.extend(
            ["accepted", "m", "sigma2", "sigma2_initial", "rounds", "flagged", "refreshed", "cumulative_evaluations"]
                .iter()
                .map(|s| s.to_string()),
        );
        w.write_record(&header).map_err(|e| Error::Io(e.to_string()))?;
        let mut cumulative = 0u64;
        for (i, (draw, r)) in self.draws.iter().zip(&self.records).enumerate() {
            cumulative += r.evaluations;
            let mut row = vec![
                (i + 1).to_string(),
                if i < self.burn_in { "burn-in" } else { "sampling" }.to_string(),
            ];
            row.extend(draw.iter().map(|v| format!("{v:?}")));
            row.push(u8::from(r.accepted).to_string());
            row.push(r.subsample_size.to_string());
            row.push(format!("{:?}", r.sigma2));
            row.push(format!("{:?}", r.sigma2_before_adaptation));
            row.push(r.adaptation_rounds.to_string());
            row.push(u8::from(r.flagged).to_string());
            row.push(u8::from(r.refreshed).to_string());
            row.push(cumulative.to_string());
            w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A run that stopped early; `trace` holds the iterations completed.
#[derive(Debug)]
pub struct ChainAbort {
    pub trace: Box<Trace>,
    pub error: Error,
}

impl std::fmt::Display for ChainAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "chain aborted after {} iterations: {}", self.trace.len(), self.error)
    }
}

impl std::error::Error for ChainAbort {}

/// Burn-in (ω = 1, scale adaptation for random walks) followed by sampling.
pub fn run_chain(setup: ChainSetup<'_>, config: EngineConfig) -> std::result::Result<Trace, ChainAbort> {
    let model = setup.model;
    let empty = |error: Error| ChainAbort {
        trace: Box::new(Trace {
            param_names: model.param_names(),
            burn_in: 0,
            draws: Vec::new(),
            records: Vec::new(),
            population_size: model.population_size(),
            final_scale: f64::NAN,
            adaptation: Vec::new(),
            estimator_calls: 0,
            max_state_evaluations: 0,
            cost_model: model.cost_model(),
            burn_in_seconds: 0.0,
            sampling_seconds: 0.0,
        }),
        error,
    };
    let burn_in = config.burn_in();
    let iterations = config.iterations;
    let adapt_scale = config.proposal == ProposalKind::Rwm;
    let mut sampler = Sampler::new(setup, config).map_err(empty)?;
    let mut state = sampler.initial_state().map_err(empty)?;
    let mut trace = Trace {
        param_names: model.param_names(),
        burn_in,
        draws: Vec::with_capacity(iterations),
        records: Vec::with_capacity(iterations),
        population_size: model.population_size(),
        final_scale: sampler.scale(),
        adaptation: Vec::new(),
        estimator_calls: 0,
        max_state_evaluations: state.evaluations,
        cost_model: model.cost_model(),
        burn_in_seconds: 0.0,
        sampling_seconds: 0.0,
    };
    for i in 0..iterations {
        let in_burn = i < burn_in;
        let started = Instant::now();
        let (next, record) = match sampler.pm_mh_step(state.clone(), in_burn) {
            Ok(v) => v,
            Err(error) => {
                trace.final_scale = sampler.scale();
                trace.adaptation = sampler.adapter.history().to_vec();
                trace.estimator_calls = sampler.estimator_calls();
                return Err(ChainAbort {
                    trace: Box::new(trace),
                    error,
                });
            }
        };
        let elapsed = started.elapsed().as_secs_f64();
        if in_burn {
            trace.burn_in_seconds += elapsed;
            if adapt_scale {
                sampler.adapter.record(record.accepted);
            }
        } else {
            trace.sampling_seconds += elapsed;
        }
        state = next;
        trace.max_state_evaluations = trace.max_state_evaluations.max(state.evaluations);
        trace.draws.push(state.theta.clone());
        trace.records.push(record);
    }
    trace.final_scale = sampler.scale();
    trace.adaptation = sampler.adapter.history().to_vec();
    trace.estimator_calls = sampler.estimator_calls();
    Ok(trace)
}
