//! Comparison methods: synthetic likelihood with slice sampling, and
//! sequential Monte Carlo ABC.

pub mod sl;
pub mod smc_abc;

pub use sl::{run_sl_mcmc, synthetic_log_likelihood, SlConfig, SlRun};
pub use smc_abc::{effective_sample_size, run_smc_abc, run_smc_abc_with, ParticlePopulation, SmcAbcConfig, SmcAbcRun};
