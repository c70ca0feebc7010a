//! Exact stochastic simulation of Markov jump processes over integer
//! species counts, recorded on a regular time grid.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A set of reactions over `n_species` integer counts.
pub trait ReactionNetwork {
    fn n_species(&self) -> usize;
    fn n_reactions(&self) -> usize;
    /// Writes the rate of every reaction at `state` into `rates`.
    fn propensities(&self, state: &[u64], rates: &mut [f64]);
    /// Applies reaction `reaction` to `state`.
    fn fire(&self, reaction: usize, state: &mut [u64]);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub horizon: f64,
    pub interval: f64,
    /// Reaction events allowed before the run is declared divergent.
    pub max_events: u64,
}

impl GridSpec {
    pub fn n_points(&self) -> usize {
        (self.horizon / self.interval).round() as usize + 1
    }

    fn time(&self, k: usize) -> f64 {
        k as f64 * self.interval
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `series[s][k]`: count of species `s` at grid time `k * interval`.
    pub series: Vec<Vec<u64>>,
    pub events: u64,
    /// Set when the event cap was hit; the state is then held constant
    /// for the rest of the horizon.
    pub diverged: bool,
}

/// Runs the direct method from `initial` and records the state at every
/// grid point.
pub fn simulate_grid<N: ReactionNetwork + ?Sized>(
    network: &N,
    initial: &[u64],
    grid: GridSpec,
    rng: &mut Rng,
) -> Result<Trajectory> {
    if initial.len() != network.n_species() {
        return Err(Error::DimensionMismatch {
            what: "initial species counts",
            expected: network.n_species(),
            got: initial.len(),
        });
    }
    if !(grid.horizon > 0.0 && grid.interval > 0.0) {
        return Err(Error::InvalidArgument("grid horizon and interval must be positive".into()));
    }
    let n_points = grid.n_points();
    let mut series = vec![Vec::with_capacity(n_points); initial.len()];
    let mut state = initial.to_vec();
    let mut rates = vec![0.0; network.n_reactions()];
    let mut t = 0.0;
    let mut next_k = 0;
    let mut events = 0;
    let mut diverged = false;

    let record_until = |limit: f64, state: &[u64], next_k: &mut usize, series: &mut Vec<Vec<u64>>| {
        while *next_k < n_points && grid.time(*next_k) < limit {
            for (s, v) in series.iter_mut().zip(state) {
                s.push(*v);
            }
            *next_k += 1;
        }
    };

    loop {
        network.propensities(&state, &mut rates);
        let total: f64 = rates.iter().sum();
        if !total.is_finite() {
            return Err(Error::NonFinite("reaction propensities".into()));
        }
        if total <= 0.0 {
            break;
        }
        let wait = -(1.0 - rng.random::<f64>()).ln() / total;
        let t_next = t + wait;
        record_until(t_next, &state, &mut next_k, &mut series);
        if next_k >= n_points {
            break;
        }
        let mut pick = rng.random::<f64>() * total;
        let mut reaction = rates.len() - 1;
        for (r, &rate) in rates.iter().enumerate() {
            if pick < rate {
                reaction = r;
                break;
            }
            pick -= rate;
        }
        // guard against rounding landing on a zero-rate reaction
        while rates[reaction] <= 0.0 {
            reaction -= 1;
        }
        network.fire(reaction, &mut state);
        t = t_next;
        events += 1;
        if events >= grid.max_events {
            diverged = true;
            break;
        }
    }
    record_until(f64::INFINITY, &state, &mut next_k, &mut series);
    Ok(Trajectory {
        series,
        events,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    /// Immigration at rate `a`, each individual dies at rate `b`.
    struct ImmigrationDeath {
        a: f64,
        b: f64,
    }

    impl ReactionNetwork for ImmigrationDeath {
        fn n_species(&self) -> usize {
            1
        }
        fn n_reactions(&self) -> usize {
            2
        }
        fn propensities(&self, state: &[u64], rates: &mut [f64]) {
            rates[0] = self.a;
            rates[1] = self.b * state[0] as f64;
        }
        fn fire(&self, reaction: usize, state: &mut [u64]) {
            if reaction == 0 {
                state[0] += 1;
            } else {
                state[0] -= 1;
            }
        }
    }

    #[test]
    fn grid_has_expected_length_and_start() {
        let grid = GridSpec {
            horizon: 30.0,
            interval: 0.2,
            max_events: 100_000,
        };
        assert_eq!(grid.n_points(), 151);
        let traj = simulate_grid(&ImmigrationDeath { a: 2.0, b: 0.1 }, &[5], grid, &mut seeded(0)).unwrap();
        assert_eq!(traj.series[0].len(), 151);
        assert_eq!(traj.series[0][0], 5);
    }

    #[test]
    fn event_cap_holds_state() {
        let grid = GridSpec {
            horizon: 30.0,
            interval: 0.2,
            max_events: 10,
        };
        let traj = simulate_grid(&ImmigrationDeath { a: 100.0, b: 0.0 }, &[0], grid, &mut seeded(1)).unwrap();
        assert!(traj.diverged);
        assert_eq!(traj.events, 10);
        assert_eq!(*traj.series[0].last().unwrap(), 10);
        assert_eq!(traj.series[0].len(), 151);
    }

    #[test]
    fn absorbing_state_stops_early() {
        let grid = GridSpec {
            horizon: 10.0,
            interval: 1.0,
            max_events: 1000,
        };
        let traj = simulate_grid(&ImmigrationDeath { a: 0.0, b: 0.0 }, &[3], grid, &mut seeded(2)).unwrap();
        assert_eq!(traj.events, 0);
        assert!(traj.series[0].iter().all(|&v| v == 3));
    }
}
