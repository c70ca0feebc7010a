//! Population Monte Carlo ABC with a shrinking acceptance threshold.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::distance::euclidean;
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::rng::{derive_seed, seeded, substream, Rng};
use crate::simulators::{Prior, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcAbcConfig {
    pub particles: usize,
    /// Prior simulations in round 0; defaults to `ceil(particles /
    /// pilot_quantile)`.
    pub pilot_size: Option<usize>,
    /// Fraction of round-0 simulations whose distance sets the first
    /// threshold; it is also the guaranteed round-0 acceptance rate.
    pub pilot_quantile: f64,
    /// Fixes the first threshold; round 0 then samples the prior until
    /// `particles` simulations are accepted.
    pub initial_epsilon: Option<f64>,
    pub decay: f64,
    /// Resample when the effective sample size falls below this fraction
    /// of the population.
    pub ess_fraction: f64,
    /// A round whose acceptance rate would fall below this aborts.
    pub min_acceptance: f64,
    pub max_rounds: usize,
    pub simulation_budget: Option<u64>,
    pub min_epsilon: Option<f64>,
    pub seed: u64,
}

impl Default for SmcAbcConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            pilot_size: None,
            pilot_quantile: 0.2,
            initial_epsilon: None,
            decay: 0.9,
            ess_fraction: 0.5,
            min_acceptance: 1e-3,
            max_rounds: 20,
            simulation_budget: None,
            min_epsilon: None,
            seed: 0,
        }
    }
}

impl SmcAbcConfig {
    fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::InvalidArgument("SMC-ABC needs at least 2 particles".into()));
        }
        if self.max_rounds == 0 {
            return Err(Error::InvalidArgument("max_rounds must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::InvalidArgument("decay must lie in (0, 1)".into()));
        }
        if !(self.min_acceptance > 0.0 && self.min_acceptance <= 1.0) {
            return Err(Error::InvalidArgument("min_acceptance must lie in (0, 1]".into()));
        }
        if !(self.pilot_quantile > 0.0 && self.pilot_quantile <= 1.0) {
            return Err(Error::InvalidArgument("pilot_quantile must lie in (0, 1]".into()));
        }
        match self.initial_epsilon {
            Some(e) if !(e > 0.0) => Err(Error::InvalidArgument("initial_epsilon must be positive".into())),
            None if self.pilot_rank() < self.particles => Err(Error::InvalidArgument(format!(
                "a pilot of {} simulations at quantile {} accepts fewer than {} particles",
                self.pilot_len(),
                self.pilot_quantile,
                self.particles
            ))),
            _ => Ok(()),
        }
    }

    fn pilot_len(&self) -> usize {
        self.pilot_size
            .unwrap_or_else(|| (self.particles as f64 / self.pilot_quantile).ceil() as usize)
    }

    /// Rank of the pilot distance used as the first threshold.
    fn pilot_rank(&self) -> usize {
        (self.pilot_quantile * self.pilot_len() as f64).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticlePopulation {
    pub round: usize,
    pub epsilon: f64,
    pub particles: Vec<Vec<f64>>,
    /// Normalized importance weights.
    pub weights: Vec<f64>,
    /// Simulator calls so far, pilot included.
    pub simulations: u64,
    pub acceptance_rate: f64,
    pub resampled: bool,
}

impl ParticlePopulation {
    pub fn ess(&self) -> f64 {
        effective_sample_size(&self.weights)
    }

    /// Weighted mean of the particles.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.particles[0].len();
        (0..d)
            .map(|j| self.particles.iter().zip(&self.weights).map(|(p, w)| w * p[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcAbcRun {
    pub initial_epsilon: f64,
    pub populations: Vec<ParticlePopulation>,
}

impl SmcAbcRun {
    pub fn simulator_calls(&self) -> u64 {
        self.populations.last().map_or(0, |p| p.simulations)
    }
}

/// `1 / sum(w^2)` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

fn normalize(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_weights.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Gaussian perturbation kernel: lower Cholesky factor of twice the
/// weighted population covariance.
struct Kernel {
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Kernel {
    fn fit(particles: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        let d = particles[0].len();
        let mut mean = DVector::zeros(d);
        for (p, w) in particles.iter().zip(weights) {
            mean += DVector::from_column_slice(p) * *w;
        }
        let mut cov = DMatrix::zeros(d, d);
        for (p, w) in particles.iter().zip(weights) {
            let c = DVector::from_column_slice(p) - &mean;
            cov.ger(*w, &c, &c, 1.0);
        }
        cov *= 2.0;
        let chol = match cov.clone().cholesky() {
            Some(c) => c,
            None => {
                let ridge = 1e-8 * cov.trace().max(f64::MIN_POSITIVE) / d as f64;
                for i in 0..d {
                    cov[(i, i)] += ridge;
                }
                cov.cholesky().ok_or_else(|| {
                    Error::SingularCovariance("particle population has collapsed".into())
                })?
            }
        };
        let l = chol.l();
        let log_det: f64 = l.diagonal().iter().map(|v| v.ln()).sum();
        let log_norm = -log_det - 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(Self { chol: l, log_norm })
    }

    fn perturb(&self, center: &[f64], rng: &mut Rng) -> Vec<f64> {
        let z = DVector::from_fn(center.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let step = &self.chol * z;
        center.iter().zip(step.iter()).map(|(c, s)| c + s).collect()
    }

    fn log_density(&self, x: &[f64], center: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(center).map(|(a, b)| a - b));
        let z = self.chol.solve_lower_triangular(&diff).expect("positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

/// Round 0 from a prior pilot: the first threshold is the `k`-th smallest
/// pilot distance with `k = ceil(q * pilot_size) >= particles`, so at least
/// a fraction `q` of round-0 simulations is accepted. When more than
/// `particles` are accepted a uniform subset is kept.
fn pilot_round<S: Simulator + ?Sized>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    config: &SmcAbcConfig,
) -> Result<(ParticlePopulation, f64)> {
    let seed = derive_seed(config.seed, 1);
    let mut rng = seeded(seed);
    let n = config.pilot_len();
    let mut thetas = Vec::with_capacity(n);
    let mut distances = Vec::with_capacity(n);
    for i in 0..n as u64 {
        let theta = prior.sample(&mut rng);
        let d = match simulator.simulate(&theta, &mut substream(seed, i)) {
            Ok(x) => euclidean(&x, observed),
            Err(_) => f64::INFINITY,
        };
        thetas.push(theta);
        distances.push(if d.is_nan() { f64::INFINITY } else { d });
    }
    let mut sorted = distances.clone();
    sorted.sort_by(f64::total_cmp);
    let epsilon = sorted[config.pilot_rank() - 1];
    if !epsilon.is_finite() {
        return Err(Error::Simulation("too many pilot simulations failed".into()));
    }
    let accepted: Vec<usize> = (0..n).filter(|&i| distances[i] <= epsilon).collect();
    let acceptance_rate = accepted.len() as f64 / n as f64;
    let mut keep: Vec<usize> = if accepted.len() > config.particles {
        rand::seq::index::sample(&mut rng, accepted.len(), config.particles)
            .into_iter()
            .map(|j| accepted[j])
            .collect()
    } else {
        accepted
    };
    keep.sort_unstable();
    let m = keep.len();
    let population = ParticlePopulation {
        round: 0,
        epsilon,
        particles: keep.into_iter().map(|i| thetas[i].clone()).collect(),
        weights: vec![1.0 / m as f64; m],
        simulations: n as u64,
        acceptance_rate,
        resampled: false,
    };
    log::info!("SMC-ABC round 0: epsilon {epsilon:.4}, acceptance {acceptance_rate:.4}, {n} simulations");
    Ok((population, epsilon))
}

/// `epsilon_0 * decay^t` as `t` successive products, so the value does not
/// depend on how `powi` is lowered.
pub fn threshold(initial_epsilon: f64, decay: f64, round: usize) -> f64 {
    (0..round).fold(initial_epsilon, |e, _| e * decay)
}

/// Runs rounds `t = 0, 1, ...` with threshold `epsilon_0 * decay^t` until
/// `max_rounds` rounds are done, the simulation budget is spent, or the
/// next threshold would drop below `min_epsilon`.
pub fn run_smc_abc<S: Simulator + ?Sized>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    config: &SmcAbcConfig,
) -> Result<SmcAbcRun> {
    run_smc_abc_with(prior, simulator, observed, config, |_| {})
}

/// [`run_smc_abc`] calling `on_population` after every completed round.
pub fn run_smc_abc_with<S, F>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    config: &SmcAbcConfig,
    mut on_population: F,
) -> Result<SmcAbcRun>
where
    S: Simulator + ?Sized,
    F: FnMut(&ParticlePopulation),
{
    config.validate()?;
    prior.validate()?;
    ensure_dim("prior dimension", simulator.param_dim(), prior.dim())?;
    ensure_dim("observed data", simulator.data_dim(), observed.len())?;
    ensure_finite("observed data", observed)?;
    let m = config.particles;
    let max_attempts = (m as f64 / config.min_acceptance).ceil() as u64;
    let mut simulations = 0u64;

    let mut populations: Vec<ParticlePopulation> = Vec::new();
    let initial_epsilon = match config.initial_epsilon {
        Some(e) => e,
        None => {
            let (population, epsilon) = pilot_round(prior, simulator, observed, config)?;
            simulations = population.simulations;
            on_population(&population);
            populations.push(population);
            epsilon
        }
    };
    for round in populations.len()..config.max_rounds {
        let epsilon = threshold(initial_epsilon, config.decay, round);
        if let Some(min) = config.min_epsilon {
            if epsilon < min && round > 0 {
                break;
            }
        }
        if let (Some(budget), Some(_)) = (config.simulation_budget, populations.last()) {
            if simulations >= budget {
                break;
            }
        }
        let round_seed = derive_seed(derive_seed(config.seed, 2), round as u64);
        let mut rng = seeded(round_seed);
        if let Some(p) = populations.last() {
            if !(epsilon < p.epsilon) {
                return Err(Error::InvalidArgument("threshold no longer decreases".into()));
            }
        }
        let previous = populations.last();
        let kernel = previous.map(|p| Kernel::fit(&p.particles, &p.weights)).transpose()?;
        let picker = previous.map(|p| WeightedIndex::new(&p.weights)).transpose().map_err(|e| {
            Error::InvalidArgument(format!("invalid particle weights: {e}"))
        })?;

        let mut particles = Vec::with_capacity(m);
        let mut round_sims = 0u64;
        let mut attempts = 0u64;
        while particles.len() < m {
            if attempts >= max_attempts {
                let rate = particles.len() as f64 / round_sims.max(1) as f64;
                return Err(Error::AcceptanceCollapse { round, rate });
            }
            attempts += 1;
            let theta = match (previous, &kernel, &picker) {
                (Some(p), Some(k), Some(pick)) => k.perturb(&p.particles[pick.sample(&mut rng)], &mut rng),
                _ => prior.sample(&mut rng),
            };
            if !prior.contains(&theta) {
                continue;
            }
            round_sims += 1;
            let Ok(x) = simulator.simulate(&theta, &mut substream(round_seed, round_sims)) else {
                continue;
            };
            if euclidean(&x, observed) <= epsilon {
                particles.push(theta);
            }
        }
        simulations += round_sims;

        let log_weights: Vec<f64> = match (previous, &kernel) {
            (Some(p), Some(k)) => particles
                .iter()
                .map(|theta| {
                    let terms: Vec<f64> = p
                        .particles
                        .iter()
                        .zip(&p.weights)
                        .filter(|(_, w)| **w > 0.0)
                        .map(|(c, w)| w.ln() + k.log_density(theta, c))
                        .collect();
                    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let mix = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
                    prior.log_density(theta) - mix
                })
                .collect(),
            _ => vec![0.0; m],
        };
        let mut weights = normalize(&log_weights);
        let mut resampled = false;
        if effective_sample_size(&weights) < config.ess_fraction * m as f64 {
            let pick = WeightedIndex::new(&weights)
                .map_err(|e| Error::InvalidArgument(format!("invalid particle weights: {e}")))?;
            particles = (0..m).map(|_| particles[pick.sample(&mut rng)].clone()).collect();
            weights = vec![1.0 / m as f64; m];
            resampled = true;
        }
        let population = ParticlePopulation {
            round,
            epsilon,
            particles,
            weights,
            simulations,
            acceptance_rate: m as f64 / round_sims as f64,
            resampled,
        };
        log::info!(
            "SMC-ABC round {round}: epsilon {epsilon:.4}, acceptance {:.4}, {simulations} simulations",
            population.acceptance_rate
        );
        on_population(&population);
        populations.push(population);
    }
    Ok(SmcAbcRun {
        initial_epsilon,
        populations,
    })
}
