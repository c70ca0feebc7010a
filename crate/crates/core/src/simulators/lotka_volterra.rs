//! Stochastic Lotka-Volterra predator-prey model and its nine summary
//! features.

use super::gillespie::{simulate_grid, GridSpec, ReactionNetwork};
use super::{Simulator, Whitening};
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::rng::Rng;

pub const LV_PARAM_DIM: usize = 4;
pub const LV_DATA_DIM: usize = 9;
pub const LV_INITIAL: [u64; 2] = [50, 100];
pub const LV_GRID: GridSpec = GridSpec {
    horizon: 30.0,
    interval: 0.2,
    max_events: 30_000,
};
/// Floor applied to variances before taking logs.
pub const VARIANCE_FLOOR: f64 = 1e-12;

pub fn lv_true_params() -> [f64; 4] {
    [0.01f64.ln(), 0.5f64.ln(), 0.0, 0.01f64.ln()]
}

/// Log rate constants: predator birth (per predator-prey pair), predator
/// death, prey birth, prey eaten (per pair).
struct Network([f64; 4]);

impl ReactionNetwork for Network {
    fn n_species(&self) -> usize {
        2
    }

    fn n_reactions(&self) -> usize {
        4
    }

    fn propensities(&self, state: &[u64], rates: &mut [f64]) {
        let (x, y) = (state[0] as f64, state[1] as f64);
        rates[0] = self.0[0] * x * y;
        rates[1] = self.0[1] * x;
        rates[2] = self.0[2] * y;
        rates[3] = self.0[3] * x * y;
    }

    fn fire(&self, reaction: usize, state: &mut [u64]) {
        match reaction {
            0 => state[0] += 1,
            1 => state[0] -= 1,
            2 => state[1] += 1,
            _ => state[1] -= 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTimeseries {
    pub predators: Vec<u64>,
    pub prey: Vec<u64>,
    pub events: u64,
    pub diverged: bool,
}

pub fn lv_simulate(theta: &[f64], rng: &mut Rng) -> Result<RawTimeseries> {
    ensure_dim("Lotka-Volterra parameter dimension", LV_PARAM_DIM, theta.len())?;
    ensure_finite("Lotka-Volterra parameters", theta)?;
    let rates = [theta[0].exp(), theta[1].exp(), theta[2].exp(), theta[3].exp()];
    let traj = simulate_grid(&Network(rates), &LV_INITIAL, LV_GRID, rng)?;
    let mut series = traj.series.into_iter();
    Ok(RawTimeseries {
        predators: series.next().expect("two species"),
        prey: series.next().expect("two species"),
        events: traj.events,
        diverged: traj.diverged,
    })
}

struct SeriesStats {
    mean: f64,
    variance: f64,
    standardized: Vec<f64>,
}

fn series_stats(v: &[f64]) -> SeriesStats {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let variance = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let standardized = if variance > 0.0 {
        let sd = variance.sqrt();
        v.iter().map(|a| (a - mean) / sd).collect()
    } else {
        vec![0.0; v.len()]
    };
    SeriesStats {
        mean,
        variance,
        standardized,
    }
}

fn lagged_product(a: &[f64], b: &[f64], lag: usize) -> f64 {
    let n = a.len();
    a[..n - lag].iter().zip(&b[lag..]).map(|(x, y)| x * y).sum::<f64>() / (n as f64 - 1.0)
}

/// Features of two equally long series, in the order: mean of each, log
/// variance of each, lag-1 and lag-2 autocorrelation of the first, the same
/// for the second, and their cross-correlation. Correlations use the overall
/// series mean and (n - 1)-normalized variance; a constant series has log
/// variance `ln(VARIANCE_FLOOR)` and zero correlations.
pub fn timeseries_features(first: &[f64], second: &[f64]) -> Result<Vec<f64>> {
    ensure_dim("series length", first.len(), second.len())?;
    if first.len() < 3 {
        return Err(Error::InvalidArgument("series need at least 3 points".into()));
    }
    let x = series_stats(first);
    let y = series_stats(second);
    Ok(vec![
        x.mean,
        y.mean,
        x.variance.max(VARIANCE_FLOOR).ln(),
        y.variance.max(VARIANCE_FLOOR).ln(),
        lagged_product(&x.standardized, &x.standardized, 1),
        lagged_product(&x.standardized, &x.standardized, 2),
        lagged_product(&y.standardized, &y.standardized, 1),
        lagged_product(&y.standardized, &y.standardized, 2),
        lagged_product(&x.standardized, &y.standardized, 0),
    ])
}

/// Unwhitened features of a run (predators first).
pub fn lv_raw_features(ts: &RawTimeseries) -> Result<Vec<f64>> {
    let n = LV_GRID.n_points();
    ensure_dim("predator series length", n, ts.predators.len())?;
    ensure_dim("prey series length", n, ts.prey.len())?;
    let as_f64 = |s: &[u64]| s.iter().map(|&c| c as f64).collect::<Vec<f64>>();
    timeseries_features(&as_f64(&ts.predators), &as_f64(&ts.prey))
}

pub fn lv_features(ts: &RawTimeseries, whitening: Option<&Whitening>) -> Result<Vec<f64>> {
    let raw = lv_raw_features(ts)?;
    match whitening {
        Some(w) => w.apply(&raw),
        None => Ok(raw),
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LotkaVolterra {
    pub whitening: Option<Whitening>,
}

impl Simulator for LotkaVolterra {
    fn param_dim(&self) -> usize {
        LV_PARAM_DIM
    }

    fn data_dim(&self) -> usize {
        LV_DATA_DIM
    }

    fn simulate(&self, theta: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
        let ts = lv_simulate(theta, rng)?;
        let x = lv_features(&ts, self.whitening.as_ref())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation("non-finite Lotka-Volterra features".into()));
        }
        Ok(x)
    }
}
