//! Goodness of fit of a learned conditional density: MMD between simulator
//! draws and model draws at a fixed parameter.

use crate::error::{Error, Result};
use crate::flow::ConditionalMaf;
use crate::gaussian::GaussianFit;
use crate::rng::{substream, Rng};
use crate::simulators::Simulator;

use super::mmd::mmd;

/// Anything that can draw data conditionally on a parameter.
pub trait ConditionalSampler {
    fn sample_n(&self, theta: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>>;
}

impl ConditionalSampler for ConditionalMaf {
    fn sample_n(&self, theta: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        let draws = ConditionalMaf::sample_n(self, theta, n, rng)?;
        Ok(draws.outer_iter().map(|r| r.to_vec()).collect())
    }
}

/// Treats a simulator as a sampler; used as the self-comparison oracle.
pub struct SimulatorSampler<'a, S: ?Sized>(pub &'a S);

impl<S: Simulator + ?Sized> ConditionalSampler for SimulatorSampler<'_, S> {
    fn sample_n(&self, theta: &[f64], n: usize, rng: &mut Rng) -> Result<Vec<Vec<f64>>> {
        simulate_batch(self.0, theta, n, rng)
    }
}

pub(crate) fn simulate_batch<S: Simulator + ?Sized>(
    simulator: &S,
    theta: &[f64],
    n: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>> {
    (0..n).map(|_| simulator.simulate(theta, rng)).collect()
}

/// MMD between `n` simulator draws and `n` model draws at `theta`.
/// Simulator and model use separate substreams of `seed`.
pub fn likelihood_gof<M, S>(model: &M, simulator: &S, theta: &[f64], n: usize, seed: u64) -> Result<f64>
where
    M: ConditionalSampler + ?Sized,
    S: Simulator + ?Sized,
{
    if n < 2 {
        return Err(Error::InvalidArgument("goodness of fit needs n >= 2".into()));
    }
    let real = simulate_batch(simulator, theta, n, &mut substream(seed, 0))?;
    let fake = model.sample_n(theta, n, &mut substream(seed, 1))?;
    mmd(&real, &fake)
}

/// Same statistic with the model replaced by a Gaussian fitted to an
/// independent batch of `n` simulator draws.
pub fn gaussian_baseline_gof<S: Simulator + ?Sized>(simulator: &S, theta: &[f64], n: usize, seed: u64) -> Result<f64> {
    if n < 2 {
        return Err(Error::InvalidArgument("goodness of fit needs n >= 2".into()));
    }
    let real = simulate_batch(simulator, theta, n, &mut substream(seed, 0))?;
    let fit_batch = simulate_batch(simulator, theta, n, &mut substream(seed, 2))?;
    let gauss = GaussianFit::fit(&fit_batch)?;
    let mut rng = substream(seed, 1);
    let fake: Vec<Vec<f64>> = (0..n).map(|_| gauss.sample(&mut rng)).collect();
    mmd(&real, &fake)
}
