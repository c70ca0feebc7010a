//! M/G/1 queue: uniform service times, exponential inter-arrival times.
//! Data are five quantiles of the inter-departure times.

use rand::Rng as _;
use rand_distr::{Distribution, Exp};

use super::{quantile_sorted, Simulator, Whitening};
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::rng::Rng;

pub const MG1_PARAM_DIM: usize = 3;
pub const MG1_DATA_DIM: usize = 5;
pub const MG1_CUSTOMERS: usize = 50;
pub const MG1_TRUE_PARAMS: [f64; 3] = [1.0, 5.0, 0.2];
pub const MG1_QUANTILES: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Service time `~ U(theta_1, theta_2)`, arrival rate `theta_3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mg1Queue {
    pub customers: usize,
    /// Applied to the raw quantiles; `None` returns them unwhitened.
    pub whitening: Option<Whitening>,
}

impl Default for Mg1Queue {
    fn default() -> Self {
        Self {
            customers: MG1_CUSTOMERS,
            whitening: None,
        }
    }
}

impl Mg1Queue {
    pub fn with_whitening(whitening: Whitening) -> Self {
        Self {
            whitening: Some(whitening),
            ..Self::default()
        }
    }

    /// Inter-departure times `d_i - d_{i-1}` for one run.
    pub fn inter_departures(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        ensure_dim("M/G/1 parameter dimension", MG1_PARAM_DIM, theta.len())?;
        ensure_finite("M/G/1 parameters", theta)?;
        let (lo, hi, rate) = (theta[0], theta[1], theta[2]);
        if !(rate > 0.0) {
            return Err(Error::Simulation(format!("arrival rate must be positive, got {rate}")));
        }
        if lo < 0.0 || hi < lo {
            return Err(Error::Simulation(format!(
                "service-time bounds must satisfy 0 <= lower <= upper, got [{lo}, {hi}]"
            )));
        }
        let arrivals = Exp::new(rate).map_err(|e| Error::Simulation(e.to_string()))?;
        let mut arrival = 0.0;
        let mut departure = 0.0f64;
        let mut gaps = Vec::with_capacity(self.customers);
        for _ in 0..self.customers {
            let service = lo + (hi - lo) * rng.random::<f64>();
            arrival += arrivals.sample(rng);
            let next = departure + service + (arrival - departure).max(0.0);
            gaps.push(next - departure);
            departure = next;
        }
        Ok(gaps)
    }

    /// Unwhitened quantiles of the inter-departure times.
    pub fn raw_quantiles(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let mut gaps = self.inter_departures(theta, rng)?;
        gaps.sort_by(f64::total_cmp);
        Ok(MG1_QUANTILES.iter().map(|&p| quantile_sorted(&gaps, p)).collect())
    }
}

impl Simulator for Mg1Queue {
    fn param_dim(&self) -> usize {
        MG1_PARAM_DIM
    }

    fn data_dim(&self) -> usize {
        MG1_DATA_DIM
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let raw = self.raw_quantiles(theta, rng)?;
        match &self.whitening {
            Some(w) => w.apply(&raw),
            None => Ok(raw),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn fast_arrivals_make_departures_equal_service() {
        let q = Mg1Queue::default();
        let x = q.raw_quantiles(&[2.5, 2.5, 1e6], &mut seeded(0)).unwrap();
        for v in x {
            assert!((v - 2.5).abs() < 1e-4, "{v}");
        }
    }

    #[test]
    fn min_inter_departure_bounds_service_floor() {
        let q = Mg1Queue::default();
        let mut rng = seeded(1);
        for k in 0..200 {
            let lo = 0.05 * k as f64;
            let theta = [lo, lo + 3.0, 0.1 + 0.001 * k as f64];
            let gaps = q.inter_departures(&theta, &mut rng).unwrap();
            assert!(gaps.iter().all(|&g| g >= lo && g > 0.0));
            let x = q.raw_quantiles(&theta, &mut rng).unwrap();
            assert!(x[0] >= lo);
            assert!(x.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn invalid_parameters() {
        let q = Mg1Queue::default();
        let mut rng = seeded(2);
        assert!(q.simulate(&[1.0, 2.0, 0.0], &mut rng).is_err());
        assert!(q.simulate(&[1.0, 2.0, -0.1], &mut rng).is_err());
        assert!(q.simulate(&[3.0, 2.0, 0.1], &mut rng).is_err());
    }
}
