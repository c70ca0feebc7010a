//! Simulation-based calibration: ranks of true parameters among posterior
//! draws, which are uniform on `{0, ..., L}` for a calibrated procedure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::special::{binomial_quantile, chi_square_sf};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};
use crate::simulators::{Prior, Simulator};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub trial: usize,
    /// One rank in `0..=L` per parameter.
    pub ranks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTrial {
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcResult {
    pub posterior_samples: usize,
    pub param_dim: usize,
    pub records: Vec<RankRecord>,
    pub skipped: Vec<SkippedTrial>,
}

/// Number of draws strictly below the true value.
pub fn rank_of(truth: f64, draws: impl IntoIterator<Item = f64>) -> usize {
    draws.into_iter().filter(|&d| d < truth).count()
}

impl SbcResult {
    /// Counts per rank value `0..=L` for parameter `param`.
    pub fn histogram(&self, param: usize) -> Vec<usize> {
        let mut counts = vec![0; self.posterior_samples + 1];
        for r in &self.records {
            counts[r.ranks[param]] += 1;
        }
        counts
    }

    /// Pearson chi-square p-value for uniformity of the ranks of `param`.
    pub fn chi_square_p_value(&self, param: usize) -> f64 {
        uniformity_p_value(&self.histogram(param))
    }

    /// Pointwise band holding each bin count of a uniform histogram with
    /// probability `level` (Binomial quantiles).
    pub fn uniformity_band(&self, level: f64) -> (u64, u64) {
        uniformity_band(self.records.len() as u64, self.posterior_samples + 1, level)
    }
}

pub fn uniformity_p_value(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    chi_square_sf(statistic, (counts.len() - 1) as f64)
}

pub fn uniformity_band(trials: u64, bins: usize, level: f64) -> (u64, u64) {
    let p = 1.0 / bins as f64;
    let tail = 0.5 * (1.0 - level);
    (binomial_quantile(trials, p, tail), binomial_quantile(trials, p, 1.0 - tail))
}

/// Runs `n_trials` independent trials: draw `theta ~ prior`,
/// `x ~ simulator(theta)`, call `inference(x, seed)` for `L` posterior draws
/// and rank each true coordinate among them. Failed trials are recorded in
/// `skipped` and left out of the ranks.
pub fn sbc_ranks<S, F>(
    prior: &Prior,
    simulator: &S,
    inference: F,
    n_trials: usize,
    posterior_samples: usize,
    seed: u64,
) -> Result<SbcResult>
where
    S: Simulator + ?Sized,
    F: Fn(&[f64], u64) -> Result<Vec<Vec<f64>>> + Sync,
{
    if n_trials == 0 || posterior_samples == 0 {
        return Err(Error::InvalidArgument("SBC needs at least one trial and one posterior sample".into()));
    }
    let dim = prior.dim();
    let outcomes: Vec<std::result::Result<RankRecord, SkippedTrial>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(seed, trial as u64);
            let theta = prior.sample(&mut rng);
            let run = || -> Result<RankRecord> {
                let x = simulator.simulate(&theta, &mut rng.clone())?;
                let draws = inference(&x, derive_seed(seed, trial as u64))?;
                if draws.len() != posterior_samples || draws.iter().any(|d| d.len() != dim) {
                    return Err(Error::Inference(format!(
                        "expected {posterior_samples} draws of dimension {dim}"
                    )));
                }
                let ranks = (0..dim)
                    .map(|i| rank_of(theta[i], draws.iter().map(|d| d[i])))
                    .collect();
                Ok(RankRecord { trial, ranks })
            };
            run().map_err(|e| {
                log::warn!("calibration trial {trial} skipped: {e}");
                SkippedTrial {
                    trial,
                    error: e.to_string(),
                }
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(s) => skipped.push(s),
        }
    }
    Ok(SbcResult {
        posterior_samples,
        param_dim: dim,
        records,
        skipped,
    })
}
