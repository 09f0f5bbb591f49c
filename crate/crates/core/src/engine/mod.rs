//! Pseudo-marginal sampler, its proposals and tuning helpers.

pub mod acceptance;
pub mod adapt;
pub mod chain;
pub mod mode;
pub mod proposal;
pub mod sizing;

pub use acceptance::{acceptance_simplification_check, log_acceptance_ratio, RatioInputs};
pub use adapt::{adapt_burnin, AdaptationBatch, ScaleAdapter};
pub use chain::{
    run_chain, ChainAbort, ChainSetup, ChainState, EngineConfig, EstimatorKind, ProposalKind, Sampler,
    StepRecord, Streams, Trace,
};
pub use mode::{find_mode_and_curvature, finite_difference_hessian, minimize};
pub use proposal::{imh_propose, multivariate_t_log_density, rwm_propose, ProposalFactor};
pub use sizing::{calibrate_srs_size, choose_m_for_target_error, predicted_fractional_error};
