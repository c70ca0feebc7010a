//! Gaussian prior, Gaussian simulator: posteriors in closed form.

use rand::Rng as _;
use rand_distr::StandardNormal;
use snl_core::rng::Rng;
use snl_core::simulators::{LinearGaussian, Prior};

pub const PRIOR_SCALE: f64 = 1.0;
pub const BOX: f64 = 6.0;

/// `N(0, PRIOR_SCALE^2 I)` truncated to `[-BOX, BOX]^dim`.
pub fn prior(dim: usize) -> Prior {
    Prior::truncated_gaussian_box(vec![0.0; dim], PRIOR_SCALE, vec![-BOX; dim], vec![BOX; dim]).unwrap()
}

pub fn simulator(dim: usize, noise: f64) -> LinearGaussian {
    LinearGaussian::new(dim, noise)
}

/// Posterior mean and sd per coordinate, ignoring the truncation.
pub fn posterior(x: f64, noise: f64) -> (f64, f64) {
    let precision = 1.0 / (PRIOR_SCALE * PRIOR_SCALE) + 1.0 / (noise * noise);
    (x / (noise * noise) / precision, precision.sqrt().recip())
}

/// Posterior mean of one coordinate with the truncation, by quadrature.
pub fn truncated_posterior_mean(x: f64, noise: f64) -> f64 {
    let (m, s) = posterior(x, noise);
    let cells = 200_000;
    let step = 2.0 * BOX / cells as f64;
    let (mut mass, mut first) = (0.0, 0.0);
    for i in 0..cells {
        let t = -BOX + (i as f64 + 0.5) * step;
        let w = (-0.5 * ((t - m) / s).powi(2)).exp();
        mass += w;
        first += w * t;
    }
    first / mass
}

/// Exact posterior draws (rejection onto the box).
pub fn posterior_draws(x: &[f64], noise: f64, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            x.iter()
                .map(|&xi| {
                    let (m, s) = posterior(xi, noise);
                    loop {
                        let t = m + s * rng.sample::<f64, _>(StandardNormal);
                        if t.abs() <= BOX {
                            break t;
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Standard error of the mean of a correlated chain by non-overlapping
/// batch means.
pub fn batch_means_standard_error(xs: &[f64], batches: usize) -> f64 {
    let len = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(len).map(|c| c.iter().sum::<f64>() / len as f64).collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}
