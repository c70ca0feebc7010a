//! `x ~ N(theta, noise_std^2 I)`: a conjugate test model with an analytic
//! likelihood.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::Simulator;
use crate::error::{ensure_dim, ensure_finite, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussian {
    pub dim: usize,
    pub noise_std: f64,
}

impl LinearGaussian {
    pub fn new(dim: usize, noise_std: f64) -> Self {
        Self { dim, noise_std }
    }

    pub fn log_likelihood(&self, x: &[f64], theta: &[f64]) -> f64 {
        let s2 = self.noise_std * self.noise_std;
        x.iter()
            .zip(theta)
            .map(|(x, t)| -0.5 * (x - t).powi(2) / s2 - 0.5 * (2.0 * std::f64::consts::PI * s2).ln())
            .sum()
    }
}

impl Simulator for LinearGaussian {
    fn param_dim(&self) -> usize {
        self.dim
    }

    fn data_dim(&self) -> usize {
        self.dim
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        ensure_dim("parameter dimension", self.dim, theta.len())?;
        ensure_finite("parameters", theta)?;
        Ok(theta
            .iter()
            .map(|t| t + self.noise_std * rng.sample::<f64, _>(StandardNormal))
            .collect())
    }
}
