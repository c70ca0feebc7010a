//! Simulator models, priors and summary-statistic whitening.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::Result;
use crate::rng::Rng;

pub mod gaussian;
pub mod gillespie;
pub mod lotka_volterra;
pub mod mg1;
pub mod prior;
pub mod registry;
pub mod toy;
pub mod whitening;

pub use gaussian::LinearGaussian;
pub use lotka_volterra::{LotkaVolterra, RawTimeseries};
pub use mg1::Mg1Queue;
pub use prior::Prior;
pub use registry::{Model, ModelOptions, MODEL_NAMES};
pub use toy::ToyModel;
pub use whitening::{Whitening, WhiteningMode};

/// A stochastic program mapping parameters to a data vector. Implementors
/// must be pure functions of `(theta, rng)`.
pub trait Simulator: Send + Sync {
    fn param_dim(&self) -> usize;
    fn data_dim(&self) -> usize;
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>>;
}

impl<S: Simulator + ?Sized> Simulator for &S {
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        (**self).simulate(theta, rng)
    }
}

impl<S: Simulator + ?Sized> Simulator for std::sync::Arc<S> {
    fn param_dim(&self) -> usize {
        (**self).param_dim()
    }
    fn data_dim(&self) -> usize {
        (**self).data_dim()
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        (**self).simulate(theta, rng)
    }
}

/// Wraps a simulator and counts every call, failed ones included.
pub struct CountingSimulator<S> {
    inner: S,
    calls: AtomicU64,
}

impl<S: Simulator> CountingSimulator<S> {
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: Simulator> Simulator for CountingSimulator<S> {
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn data_dim(&self) -> usize {
        self.inner.data_dim()
    }
    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.simulate(theta, rng)
    }
}

/// Type-7 sample quantile (linear interpolation between order statistics)
/// of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn type7_quantiles() {
        let v = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 8.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert!((quantile_sorted(&v, 0.25) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn counting_wrapper_counts_failures_too() {
        let sim = CountingSimulator::new(LinearGaussian::new(1, 1.0));
        let mut rng = crate::rng::seeded(0);
        sim.simulate(&[0.0], &mut rng).unwrap();
        assert!(sim.simulate(&[0.0, 1.0], &mut rng).is_err());
        assert_eq!(sim.calls(), 2);
        sim.reset();
        assert_eq!(sim.calls(), 0);
    }
}
