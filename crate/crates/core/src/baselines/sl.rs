//! Synthetic likelihood: a Gaussian fitted to fresh simulations at every
//! parameter the sampler visits.

use std::cell::Cell;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::gaussian::GaussianFit;
use crate::mcmc::{run_chain, ChainState};
use crate::rng::{derive_seed, seeded, substream, Rng};
use crate::simulators::{Prior, Simulator};

/// `log N(x_o | m, S)` with `m`, `S` the mean and unbiased covariance of
/// `n` simulations at `theta`. Makes exactly `n` simulator calls.
pub fn synthetic_log_likelihood<S: Simulator + ?Sized>(
    theta: &[f64],
    simulator: &S,
    n: usize,
    observed: &[f64],
    rng: &mut Rng,
) -> Result<f64> {
    let d = simulator.data_dim();
    ensure_dim("observed data", d, observed.len())?;
    if n < d + 2 {
        return Err(Error::InvalidArgument(format!(
            "synthetic likelihood in dimension {d} needs at least {} simulations, got {n}",
            d + 2
        )));
    }
    let base: u64 = rng.random();
    let sims: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| simulator.simulate(theta, &mut substream(base, i)))
        .collect::<Result<_>>()?;
    GaussianFit::fit(&sims)?.log_density(observed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlConfig {
    /// Simulations per likelihood estimate.
    pub batch_size: usize,
    pub n_samples: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for SlConfig {
    fn default() -> Self {
        Self {
            batch_size: 100,
            n_samples: 1000,
            burn_in: 200,
            thin: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlRun {
    pub samples: Vec<Vec<f64>>,
    pub target_evaluations: u64,
    pub simulator_calls: u64,
}

/// Starting points tried before giving up on finding one with a finite
/// synthetic likelihood.
const MAX_START_ATTEMPTS: usize = 100;

/// Slice sampling of `log p(theta) + synthetic_log_likelihood(theta)`.
/// The estimate at the current point is kept until the point moves, so
/// the chain targets the exact posterior of the Gaussian surrogate
/// (pseudo-marginal). A singular covariance counts as zero likelihood.
pub fn run_sl_mcmc<S: Simulator + ?Sized>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    config: &SlConfig,
) -> Result<SlRun> {
    prior.validate()?;
    ensure_dim("prior dimension", simulator.param_dim(), prior.dim())?;
    ensure_finite("observed data", observed)?;
    if config.n_samples == 0 || config.thin == 0 {
        return Err(Error::InvalidArgument("n_samples and thin must be >= 1".into()));
    }
    let evaluations = Cell::new(0u64);
    let mut sim_rng = seeded(derive_seed(config.seed, 1));
    let mut target = |theta: &[f64]| -> Result<f64> {
        let log_prior = prior.log_density(theta);
        if log_prior == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        evaluations.set(evaluations.get() + 1);
        match synthetic_log_likelihood(theta, simulator, config.batch_size, observed, &mut sim_rng) {
            Ok(v) => Ok(v + log_prior),
            Err(Error::SingularCovariance(_)) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    };
    let mut init_rng = seeded(derive_seed(config.seed, 2));
    let mut chain = None;
    for _ in 0..MAX_START_ATTEMPTS {
        let mut state = ChainState::new(prior.sample(&mut init_rng), prior.axis_widths(), derive_seed(config.seed, 3))?;
        match state.retarget(&mut target) {
            Ok(()) => {
                chain = Some(state);
                break;
            }
            Err(Error::OutOfSupport(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    let mut chain = chain.ok_or_else(|| Error::RetriesExhausted {
        retries: MAX_START_ATTEMPTS,
        last: "no starting point with a finite synthetic likelihood".into(),
    })?;
    let samples = run_chain(&mut chain, &mut target, config.n_samples, config.burn_in, config.thin)?;
    let target_evaluations = evaluations.get();
    Ok(SlRun {
        samples,
        target_evaluations,
        simulator_calls: target_evaluations * config.batch_size as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::{CountingSimulator, LinearGaussian};

    #[test]
    fn too_small_batch_rejected() {
        let sim = LinearGaussian::new(3, 1.0);
        let err = synthetic_log_likelihood(&[0.0; 3], &sim, 4, &[0.0; 3], &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn identical_simulations_are_singular() {
        struct Constant;
        impl Simulator for Constant {
            fn param_dim(&self) -> usize {
                1
            }
            fn data_dim(&self) -> usize {
                2
            }
            fn simulate(&self, _: &[f64], _: &mut Rng) -> Result<Vec<f64>> {
                Ok(vec![1.0, 2.0])
            }
        }
        let err = synthetic_log_likelihood(&[0.0], &Constant, 10, &[1.0, 2.0], &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::SingularCovariance(_)));
    }

    #[test]
    fn one_evaluation_costs_one_batch() {
        let sim = CountingSimulator::new(LinearGaussian::new(2, 1.0));
        synthetic_log_likelihood(&[0.0; 2], &sim, 37, &[0.0; 2], &mut seeded(0)).unwrap();
        assert_eq!(sim.calls(), 37);
    }
}
