//! Sequential neural likelihood: alternate between simulating at proposed
//! parameters, fitting `q(x | theta)` to everything simulated so far, and
//! slice sampling `q(x_o | theta) p(theta)` for the next proposals.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::median_distance;
use crate::error::{ensure_dim, ensure_finite, Error, Result};
use crate::flow::{train, ConditionalMaf, FlowConfig, TrainConfig};
use crate::mcmc::{run_chain, ChainState};
use crate::rng::{derive_seed, seeded, substream, Rng};
use crate::simulators::{Prior, Simulator};
use crate::store::SimulationStore;

/// Burn-in sweeps at the start of every round and of every fresh
/// diagnostic chain.
pub const DEFAULT_BURN_IN: usize = 200;
pub const DEFAULT_MAX_RETRIES: usize = 100;

// Seed labels, one per independent random stage.
const LABEL_PRIOR_PROPOSALS: u64 = 1;
const LABEL_CHAIN: u64 = 2;
const LABEL_SIMULATIONS: u64 = 3;
const LABEL_FLOW_INIT: u64 = 4;
const LABEL_TRAINING: u64 = 5;

fn stage_seed(seed: u64, label: u64, round: usize) -> u64 {
    derive_seed(derive_seed(seed, label), round as u64)
}

/// `q(x_o | theta) p(theta)` for a frozen flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorApprox {
    pub flow: ConditionalMaf,
    pub prior: Prior,
    pub observed: Vec<f64>,
}

impl PosteriorApprox {
    pub fn new(flow: ConditionalMaf, prior: Prior, observed: Vec<f64>) -> Result<Self> {
        ensure_dim("observed data", flow.data_dim, observed.len())?;
        ensure_dim("prior dimension", flow.cond_dim, prior.dim())?;
        ensure_finite("observed data", &observed)?;
        Ok(Self { flow, prior, observed })
    }

    pub fn log_density(&self, theta: &[f64]) -> Result<f64> {
        posterior_log_density(theta, self)
    }

    /// `n` draws from a fresh chain started at a prior sample and run for
    /// `burn_in` sweeps, keeping every `thin`-th sweep afterwards.
    pub fn sample(&self, n: usize, burn_in: usize, thin: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        let mut rng = substream(seed, 0);
        let start = self.prior.sample(&mut rng);
        let mut chain = ChainState::with_rng(start, self.prior.axis_widths(), substream(seed, 1))?;
        run_chain(&mut chain, &mut |t: &[f64]| self.log_density(t), n, burn_in, thin)
    }
}

/// Unnormalized log posterior; `-inf` outside the prior support.
pub fn posterior_log_density(theta: &[f64], post: &PosteriorApprox) -> Result<f64> {
    ensure_dim("parameter dimension", post.prior.dim(), theta.len())?;
    let log_prior = post.prior.log_density(theta);
    if log_prior == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(post.flow.log_prob(&post.observed, theta)? + log_prior)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnlConfig {
    pub rounds: usize,
    pub sims_per_round: usize,
    pub flow: FlowConfig,
    /// Its `seed` is ignored; each round derives its own.
    pub train: TrainConfig,
    pub burn_in: usize,
    /// Sweeps between consecutive proposals taken from the chain.
    pub thin: usize,
    /// Redraws allowed per proposal whose simulation fails.
    pub max_retries: usize,
    pub seed: u64,
}

impl Default for SnlConfig {
    fn default() -> Self {
        Self {
            rounds: 5,
            sims_per_round: 1000,
            flow: FlowConfig::default(),
            train: TrainConfig::default(),
            burn_in: DEFAULT_BURN_IN,
            thin: 1,
            max_retries: DEFAULT_MAX_RETRIES,
            seed: 0,
        }
    }
}

impl SnlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be >= 1".into()));
        }
        if self.sims_per_round < 2 {
            return Err(Error::InvalidArgument("sims_per_round must be >= 2".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be >= 1".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    /// Stored pairs after this round, `round * sims_per_round`.
    pub simulations: usize,
    /// Simulator calls so far, failed attempts included.
    pub simulator_calls: u64,
    pub median_distance: f64,
    pub validation_loss: f64,
    pub epochs: usize,
    pub seconds: f64,
    /// Chain position when the round started (`None` in round 1).
    pub chain_start: Option<Vec<f64>>,
    /// Parameters simulated in this round, retries resolved.
    pub proposals: Vec<Vec<f64>>,
    pub flow: ConditionalMaf,
}

#[derive(Debug, Clone)]
pub struct SnlRun {
    pub posterior: PosteriorApprox,
    pub reports: Vec<RoundReport>,
    pub store: SimulationStore,
}

impl SnlRun {
    pub fn simulator_calls(&self) -> u64 {
        self.reports.last().map_or(0, |r| r.simulator_calls)
    }
}

/// Where proposals come from: the prior in round 1, the persistent chain
/// afterwards.
enum Proposer<'a> {
    Prior(&'a Prior, Rng),
    Chain(&'a mut ChainState, &'a PosteriorApprox, usize),
}

impl Proposer<'_> {
    fn next(&mut self, n: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Proposer::Prior(prior, rng) => Ok((0..n).map(|_| prior.sample(rng)).collect()),
            Proposer::Chain(chain, post, thin) => {
                run_chain(*chain, &mut |t: &[f64]| post.log_density(t), n, 0, *thin)
            }
        }
    }
}

/// Simulates every proposal on its own substream, in parallel. A failed
/// slot gets a fresh parameter from `proposer` and is retried on a new
/// substream, up to `max_retries` times. Returns the pairs and the number
/// of simulator calls made.
fn simulate_round<S: Simulator + ?Sized>(
    simulator: &S,
    mut thetas: Vec<Vec<f64>>,
    proposer: &mut Proposer<'_>,
    max_retries: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, u64)> {
    let run = |theta: &[f64], call: u64| -> Result<Vec<f64>> {
        let x = simulator.simulate(theta, &mut substream(seed, call))?;
        ensure_dim("simulator output", simulator.data_dim(), x.len())?;
        ensure_finite("simulator output", &x)?;
        Ok(x)
    };
    let first: Vec<Result<Vec<f64>>> = thetas
        .par_iter()
        .enumerate()
        .map(|(i, t)| run(t, i as u64))
        .collect();
    let mut calls = thetas.len() as u64;
    let mut xs = Vec::with_capacity(thetas.len());
    for (i, outcome) in first.into_iter().enumerate() {
        let mut outcome = outcome;
        let mut retries = 0;
        let x = loop {
            match outcome {
                Ok(x) => break x,
                Err(e) if retries == max_retries => {
                    return Err(Error::RetriesExhausted {
                        retries,
                        last: e.to_string(),
                    })
                }
                Err(e) => {
                    log::debug!("simulation {i} failed ({e}); redrawing its parameter");
                    retries += 1;
                    thetas[i] = proposer.next(1)?.remove(0);
                    outcome = run(&thetas[i], calls);
                    calls += 1;
                }
            }
        };
        xs.push(x);
    }
    Ok((thetas, xs, calls))
}

/// Runs `config.rounds` rounds of sequential neural likelihood.
pub fn run_snl<S: Simulator + ?Sized>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    config: &SnlConfig,
) -> Result<SnlRun> {
    run_snl_with(prior, simulator, observed, config, |_| {})
}

/// [`run_snl`] calling `on_round` after every completed round.
pub fn run_snl_with<S, F>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    config: &SnlConfig,
    mut on_round: F,
) -> Result<SnlRun>
where
    S: Simulator + ?Sized,
    F: FnMut(&RoundReport),
{
    config.validate()?;
    prior.validate()?;
    ensure_dim("prior dimension", simulator.param_dim(), prior.dim())?;
    ensure_dim("observed data", simulator.data_dim(), observed.len())?;
    ensure_finite("observed data", observed)?;
    let n = config.sims_per_round;
    let seed = config.seed;
    let mut store = SimulationStore::new(prior.dim(), simulator.data_dim());
    let mut reports = Vec::with_capacity(config.rounds);
    let mut posterior: Option<PosteriorApprox> = None;
    let mut chain: Option<ChainState> = None;
    let mut calls = 0u64;

    for round in 1..=config.rounds {
        let started = Instant::now();
        let sim_seed = stage_seed(seed, LABEL_SIMULATIONS, round);
        let (chain_start, thetas, xs, round_calls) = match &posterior {
            None => {
                let mut proposer = Proposer::Prior(prior, seeded(derive_seed(seed, LABEL_PRIOR_PROPOSALS)));
                let thetas = proposer.next(n)?;
                let (t, x, c) = simulate_round(simulator, thetas, &mut proposer, config.max_retries, sim_seed)?;
                (None, t, x, c)
            }
            Some(post) => {
                let state = chain.as_mut().expect("chain exists after round 1");
                let start = state.point().to_vec();
                let target = &mut |t: &[f64]| post.log_density(t);
                let thetas = run_chain(state, target, n, config.burn_in, config.thin)?;
                let mut proposer = Proposer::Chain(state, post, config.thin);
                let (t, x, c) = simulate_round(simulator, thetas, &mut proposer, config.max_retries, sim_seed)?;
                (Some(start), t, x, c)
            }
        };
        calls += round_calls;
        for (t, x) in thetas.iter().zip(xs) {
            store.push(round, t.clone(), x)?;
        }

        let mut init_rng = seeded(stage_seed(seed, LABEL_FLOW_INIT, round));
        let fresh = ConditionalMaf::new(simulator.data_dim(), prior.dim(), config.flow.clone(), &mut init_rng)?;
        let train_config = TrainConfig {
            seed: stage_seed(seed, LABEL_TRAINING, round),
            ..config.train.clone()
        };
        let (flow, train_report) = train(&store, &train_config, fresh)?;
        let post = PosteriorApprox::new(flow, prior.clone(), observed.to_vec())?;

        if chain.is_none() && round < config.rounds {
            let mut rng = seeded(derive_seed(seed, LABEL_CHAIN));
            let start = prior.sample(&mut rng);
            chain = Some(ChainState::with_rng(start, prior.axis_widths(), rng)?);
        }
        let report = RoundReport {
            round,
            simulations: store.len(),
            simulator_calls: calls,
            median_distance: median_distance(&store, observed, round)?,
            validation_loss: train_report.best_validation_loss,
            epochs: train_report.epochs,
            seconds: started.elapsed().as_secs_f64(),
            chain_start,
            proposals: thetas,
            flow: post.flow.clone(),
        };
        log::info!(
            "round {round}: {} simulations, median distance {:.4}, validation loss {:.4}, {} epochs",
            report.simulations,
            report.median_distance,
            report.validation_loss,
            report.epochs
        );
        on_round(&report);
        reports.push(report);
        posterior = Some(post);
    }
    Ok(SnlRun {
        posterior: posterior.expect("at least one round"),
        reports,
        store,
    })
}

/// Neural likelihood: a single round of `n` prior simulations.
pub fn run_nl<S: Simulator + ?Sized>(
    prior: &Prior,
    simulator: &S,
    observed: &[f64],
    n: usize,
    config: &SnlConfig,
) -> Result<SnlRun> {
    let single = SnlConfig {
        rounds: 1,
        sims_per_round: n,
        ..config.clone()
    };
    run_snl(prior, simulator, observed, &single)
}
