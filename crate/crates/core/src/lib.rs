//! Likelihood-free Bayesian inference with sequential neural likelihood.
//!
//! A conditional masked autoregressive flow `q(x | theta)` is fitted to
//! simulated pairs; parameters for new simulations are proposed by slice
//! sampling the current approximate posterior `q(x_o | theta) p(theta)`.
//! The crate also carries the simulator models, the synthetic-likelihood and
//! SMC-ABC baselines, and the diagnostics used to compare them.

pub mod baselines;
pub mod diagnostics;
pub mod engine;
pub mod error;
pub mod flow;
pub mod gaussian;
pub mod mcmc;
pub mod rng;
pub mod simulators;
pub mod store;

pub use error::{Error, Result};
pub use store::{SimulationRecord, SimulationStore};
