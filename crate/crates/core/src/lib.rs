#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Pseudo-marginal MCMC with subsampled log-likelihood estimators.
//!
//! The full-data log-likelihood `l(θ) = Σ_k l_k(θ)` is replaced by an
//! unbiased subsample estimate built from control variates and a sampling
//! design. Its bias-corrected exponential drives a Metropolis-Hastings chain
//! on the augmented `(θ, u)` space.

pub mod control_variates;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod models;
pub mod sampling;

pub use error::{Error, Result};
