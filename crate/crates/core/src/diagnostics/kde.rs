//! Gaussian kernel density estimate evaluated at a single point.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
/// Smallest per-dimension bandwidth; guards against zero-variance columns.
pub const BANDWIDTH_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    /// `n^(-1/(d+4))` times the per-dimension sample standard deviation.
    Scott,
    /// Explicit per-dimension bandwidths.
    Fixed(Vec<f64>),
}

/// Sample standard deviation of a column, summed in sorted order so the
/// result does not depend on the order of the samples.
fn column_std(samples: &[Vec<f64>], j: usize) -> f64 {
    let mut col: Vec<f64> = samples.iter().map(|s| s[j]).collect();
    col.sort_by(f64::total_cmp);
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let mut sq: Vec<f64> = col.iter().map(|v| (v - mean).powi(2)).collect();
    sq.sort_by(f64::total_cmp);
    (sq.iter().sum::<f64>() / (n - 1.0)).sqrt()
}

pub fn scott_bandwidth(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as f64;
    let d = samples[0].len();
    let factor = n.powf(-1.0 / (d as f64 + 4.0));
    (0..d)
        .map(|j| (factor * column_std(samples, j)).max(BANDWIDTH_FLOOR))
        .collect()
}

/// `log` of the mixture density at `point`. The per-sample terms are
/// combined in sorted order, so the value is bit-identical under any
/// permutation of `samples`.
pub fn kde_log_prob(samples: &[Vec<f64>], point: &[f64], bandwidth: &Bandwidth) -> Result<f64> {
    let Some(first) = samples.first() else {
        return Err(Error::InvalidArgument("KDE needs samples".into()));
    };
    let d = first.len();
    ensure_dim("KDE point", d, point.len())?;
    for s in samples {
        ensure_dim("KDE sample", d, s.len())?;
    }
    let h = match bandwidth {
        Bandwidth::Scott => {
            if samples.len() < 2 {
                return Err(Error::InvalidArgument("Scott's rule needs at least 2 samples".into()));
            }
            scott_bandwidth(samples)
        }
        Bandwidth::Fixed(h) => {
            ensure_dim("KDE bandwidth", d, h.len())?;
            if h.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::InvalidArgument("bandwidths must be positive".into()));
            }
            h.clone()
        }
    };
    let norm: f64 = h.iter().map(|v| v.ln() + LN_SQRT_2PI).sum();
    let mut terms: Vec<f64> = samples
        .iter()
        .map(|s| {
            -0.5 * s
                .iter()
                .zip(point)
                .zip(&h)
                .map(|((a, b), w)| ((b - a) / w).powi(2))
                .sum::<f64>()
                - norm
        })
        .collect();
    terms.sort_by(f64::total_cmp);
    let max = *terms.last().expect("non-empty");
    if max == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    Ok(max + sum.ln() - (samples.len() as f64).ln())
}
