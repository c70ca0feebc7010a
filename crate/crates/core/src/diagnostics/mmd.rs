//! Unbiased maximum mean discrepancy with a Gaussian kernel.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{ensure_dim, Error, Result};

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_samples(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(
            "the unbiased MMD estimator needs at least 2 points per sample".into(),
        ));
    }
    let d = a[0].len();
    for p in a.iter().chain(b) {
        ensure_dim("sample dimension", d, p.len())?;
    }
    Ok(d)
}

fn canonical_order(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Median Euclidean distance over all pairs of the pooled sample; falls
/// back to 1 when every point coincides.
pub fn median_heuristic(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = a.iter().chain(b).collect();
    let mut dists: Vec<f64> = (0..pooled.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let p = &pooled;
            (i + 1..p.len()).map(move |j| squared_distance(p[i], p[j]).sqrt())
        })
        .collect();
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let h = if dists.len() % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if h > 0.0 {
        h
    } else {
        1.0
    }
}

/// Mean of `k(x_i, y_j)` over all `i, j` (or over `i != j` when `same`).
fn kernel_mean(x: &[Vec<f64>], y: &[Vec<f64>], gamma: f64, same: bool) -> f64 {
    let rows: Vec<f64> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for (j, yj) in y.iter().enumerate() {
                if same && i == j {
                    continue;
                }
                acc += (-gamma * squared_distance(&x[i], yj)).exp();
            }
            acc
        })
        .collect();
    let total: f64 = rows.iter().sum();
    let pairs = if same {
        x.len() * (x.len() - 1)
    } else {
        x.len() * y.len()
    };
    total / pairs as f64
}

/// `sqrt(max(0, MMD^2_u))` with kernel `exp(-|x - y|^2 / (2 h^2))`.
pub fn mmd_with_bandwidth(a: &[Vec<f64>], b: &[Vec<f64>], bandwidth: f64) -> Result<f64> {
    check_samples(a, b)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidArgument("MMD bandwidth must be positive".into()));
    }
    // evaluate in a canonical order so that swapping the arguments is exact
    let (a, b) = if canonical_order(a, b) == Ordering::Greater {
        (b, a)
    } else {
        (a, b)
    };
    let gamma = 0.5 / (bandwidth * bandwidth);
    let kaa = kernel_mean(a, a, gamma, true);
    let kbb = kernel_mean(b, b, gamma, true);
    let kab = kernel_mean(a, b, gamma, false);
    Ok((kaa + kbb - 2.0 * kab).max(0.0).sqrt())
}

/// MMD with the median-heuristic bandwidth.
pub fn mmd(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    check_samples(a, b)?;
    mmd_with_bandwidth(a, b, median_heuristic(a, b))
}
