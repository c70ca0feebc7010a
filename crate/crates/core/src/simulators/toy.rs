//! Five-parameter toy model: four draws from a bivariate Gaussian whose
//! mean, scales and correlation are simple functions of the parameters.
//! The likelihood is tractable, which makes exact reference posteriors
//! available.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::{Prior, Simulator};
use crate::error::{ensure_dim, ensure_finite, Result};
use crate::mcmc::{run_chain, ChainState};
use crate::rng::{substream, Rng};

pub const TOY_PARAM_DIM: usize = 5;
pub const TOY_DATA_DIM: usize = 8;
pub const TOY_TRUE_PARAMS: [f64; 5] = [0.7, -2.9, -1.0, -0.9, 0.6];
/// Diagonal jitter added to the 2x2 covariance before factorizing. Always
/// applied, so the simulator and the exact likelihood agree everywhere.
pub const TOY_JITTER: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ToyModel;

/// Lower Cholesky factor `(l11, l21, l22)` of the jittered covariance.
fn cholesky(theta: &[f64]) -> (f64, f64, f64) {
    let s1 = theta[2] * theta[2];
    let s2 = theta[3] * theta[3];
    let rho = theta[4].tanh();
    let a = s1 * s1 + TOY_JITTER;
    let b = rho * s1 * s2;
    let c = s2 * s2 + TOY_JITTER;
    let l11 = a.sqrt();
    let l21 = b / l11;
    // rounding can push the Schur complement below the jitter
    let l22 = (c - l21 * l21).max(TOY_JITTER * TOY_JITTER).sqrt();
    (l11, l21, l22)
}

fn check(theta: &[f64]) -> Result<()> {
    ensure_dim("toy parameter dimension", TOY_PARAM_DIM, theta.len())?;
    ensure_finite("toy parameters", theta)
}

/// `sum_j log N(x_j | m, S)` over the four 2-D blocks of `x`.
pub fn toy_exact_log_likelihood(x: &[f64], theta: &[f64]) -> Result<f64> {
    check(theta)?;
    ensure_dim("toy data dimension", TOY_DATA_DIM, x.len())?;
    let (l11, l21, l22) = cholesky(theta);
    let log_det_half = l11.ln() + l22.ln();
    Ok(x.chunks(2)
        .map(|xj| {
            let z1 = (xj[0] - theta[0]) / l11;
            let z2 = (xj[1] - theta[1] - l21 * z1) / l22;
            -0.5 * (z1 * z1 + z2 * z2) - log_det_half - LN_2PI
        })
        .sum())
}

impl Simulator for ToyModel {
    fn param_dim(&self) -> usize {
        TOY_PARAM_DIM
    }

    fn data_dim(&self) -> usize {
        TOY_DATA_DIM
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        check(theta)?;
        let (l11, l21, l22) = cholesky(theta);
        let mut x = Vec::with_capacity(TOY_DATA_DIM);
        for _ in 0..4 {
            let e1: f64 = rng.sample(StandardNormal);
            let e2: f64 = rng.sample(StandardNormal);
            x.push(theta[0] + l11 * e1);
            x.push(theta[1] + l21 * e1 + l22 * e2);
        }
        Ok(x)
    }
}

/// Posterior draws under the exact likelihood by slice sampling, started
/// from a prior draw.
pub fn toy_exact_posterior(
    prior: &Prior,
    observed: &[f64],
    n: usize,
    burn_in: usize,
    thin: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let start = prior.sample(&mut substream(seed, 0));
    let mut chain = ChainState::with_rng(start, prior.axis_widths(), substream(seed, 1))?;
    let mut target = |theta: &[f64]| -> Result<f64> {
        let log_prior = prior.log_density(theta);
        if log_prior == f64::NEG_INFINITY {
            return Ok(log_prior);
        }
        Ok(toy_exact_log_likelihood(observed, theta)? + log_prior)
    };
    run_chain(&mut chain, &mut target, n, burn_in, thin)
}
