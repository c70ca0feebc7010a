//! `run` and `simulate`: execute one configured experiment and persist its
//! artifacts.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, ensure, Context, Result};
use snl_core::baselines::{run_sl_mcmc, run_smc_abc_with, SlConfig, SmcAbcConfig};
use snl_core::engine::run_snl_with;
use snl_core::rng::{derive_seed, substream};
use snl_core::simulators::{CountingSimulator, Model, Simulator};

use crate::artifacts::*;
use crate::config::{ExperimentConfig, Method};

/// Seed label of the posterior chain drawn after a run.
const LABEL_POSTERIOR: u64 = 0x5053;

struct Outcome {
    method_simulations: u64,
    checkpoints: Vec<Checkpoint>,
}

/// Runs the experiment and writes its artifacts to `out`. The manifest is
/// written even when the run fails, with `status: failed` and the error.
pub fn run_experiment(config: &ExperimentConfig, out: &Path) -> Result<Manifest> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for stale in [ROUNDS, METRICS, SBC, SBC_HISTOGRAM, POPULATIONS] {
        let _ = fs::remove_file(out.join(stale));
    }
    let _ = fs::remove_dir_all(out.join(FLOWS));
    let mut manifest = Manifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        pilot_seed: None,
        observation_seed: None,
        status: RunStatus::Failed,
        error: None,
        simulator_calls: 0,
        method_simulations: 0,
        checkpoints: Vec::new(),
        files: Vec::new(),
    };
    let model = match Model::build(&config.model, &config.model_options) {
        Ok(m) => m,
        Err(e) => {
            manifest.error = Some(e.to_string());
            manifest.write(out)?;
            return Err(anyhow!(e).context("building the model"));
        }
    };
    manifest.pilot_seed = Some(model.artifacts.pilot_seed);
    manifest.observation_seed = Some(model.artifacts.observation_seed);
    write_json(&out.join(MODEL), &model.artifacts)?;
    manifest.files.push(MODEL.into());

    let simulator = CountingSimulator::new(Arc::clone(&model.simulator));
    let result = match config.method {
        Method::Snl | Method::Nl => run_neural(config, &model, &simulator, out, &mut manifest.files),
        Method::Sl => run_sl(config, &model, &simulator, out, &mut manifest.files),
        Method::SmcAbc => run_smc(config, &model, &simulator, out, &mut manifest.files),
    };
    manifest.simulator_calls = simulator.calls();
    match result {
        Ok(outcome) => {
            manifest.method_simulations = outcome.method_simulations;
            manifest.checkpoints = outcome.checkpoints;
            if manifest.method_simulations != manifest.simulator_calls {
                manifest.error = Some(format!(
                    "method reported {} simulations but the simulator was called {} times",
                    manifest.method_simulations, manifest.simulator_calls
                ));
                manifest.write(out)?;
                return Err(anyhow!(manifest.error.clone().unwrap_or_default()));
            }
            manifest.status = RunStatus::Complete;
            manifest.write(out)?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.error = Some(format!("{e:#}"));
            manifest.write(out)?;
            Err(e)
        }
    }
}

fn run_neural(
    config: &ExperimentConfig,
    model: &Model,
    simulator: &CountingSimulator<Arc<dyn Simulator>>,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<Outcome> {
    fs::create_dir_all(out.join(FLOWS))?;
    fs::write(out.join(ROUNDS), format!("{ROUNDS_HEADER}\n"))?;
    files.push(ROUNDS.into());
    let mut checkpoints = Vec::new();
    let mut io_error = None;
    let engine = config.engine_config();
    let run = run_snl_with(model.prior(), simulator, model.observed(), &engine, |report| {
        let calls = simulator.calls();
        checkpoints.push(Checkpoint {
            round: report.round,
            simulations: calls,
        });
        let row = format!(
            "{},{},{},{},{:.3}",
            report.round, calls, report.median_distance, report.validation_loss, report.seconds
        );
        let written = append_line(&out.join(ROUNDS), &row)
            .and_then(|_| report.flow.save(&flow_path(out, report.round)).map_err(Into::into));
        if let Err(e) = written {
            io_error.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_error {
        return Err(e);
    }
    files.extend((1..=run.reports.len()).map(|r| format!("{FLOWS}/round_{r}.json")));
    let mut store = Vec::new();
    run.store.write_jsonl(&mut store)?;
    fs::write(out.join(STORE), store)?;
    files.push(STORE.into());

    let p = &config.posterior;
    let samples = run
        .posterior
        .sample(p.samples, p.burn_in, p.thin, derive_seed(config.seed, LABEL_POSTERIOR))?;
    write_matrix(&out.join(SAMPLES), &theta_header(model.prior().dim()), &samples)?;
    files.push(SAMPLES.into());
    Ok(Outcome {
        method_simulations: run.simulator_calls(),
        checkpoints,
    })
}

fn run_sl(
    config: &ExperimentConfig,
    model: &Model,
    simulator: &CountingSimulator<Arc<dyn Simulator>>,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<Outcome> {
    let sl = SlConfig {
        seed: config.seed,
        ..config.sl.clone()
    };
    let run = run_sl_mcmc(model.prior(), simulator, model.observed(), &sl)?;
    write_matrix(&out.join(SAMPLES), &theta_header(model.prior().dim()), &run.samples)?;
    files.push(SAMPLES.into());
    Ok(Outcome {
        method_simulations: run.simulator_calls,
        checkpoints: vec![Checkpoint {
            round: 1,
            simulations: simulator.calls(),
        }],
    })
}

fn run_smc(
    config: &ExperimentConfig,
    model: &Model,
    simulator: &CountingSimulator<Arc<dyn Simulator>>,
    out: &Path,
    files: &mut Vec<String>,
) -> Result<Outcome> {
    let smc = SmcAbcConfig {
        seed: config.seed,
        ..config.smc_abc.clone()
    };
    let mut checkpoints = Vec::new();
    let mut lines = String::new();
    let run = run_smc_abc_with(model.prior(), simulator, model.observed(), &smc, |pop| {
        checkpoints.push(Checkpoint {
            round: pop.round,
            simulations: simulator.calls(),
        });
        lines.push_str(&serde_json::to_string(pop).expect("population serializes"));
        lines.push('\n');
    })?;
    fs::write(out.join(POPULATIONS), lines)?;
    files.push(POPULATIONS.into());
    let last = run.populations.last().ok_or_else(|| anyhow!("SMC-ABC produced no population"))?;
    let rows: Vec<Vec<f64>> = last
        .particles
        .iter()
        .zip(&last.weights)
        .map(|(p, w)| p.iter().copied().chain([*w]).collect())
        .collect();
    let header = format!("{},weight", theta_header(model.prior().dim()));
    write_matrix(&out.join(SAMPLES), &header, &rows)?;
    files.push(SAMPLES.into());
    Ok(Outcome {
        method_simulations: run.simulator_calls(),
        checkpoints,
    })
}

/// Builds the model, writes its artifacts and `count` simulations at
/// `theta` (the ground truth when `None`).
pub fn simulate(config: &ExperimentConfig, out: &Path, theta: Option<Vec<f64>>, count: usize) -> Result<Vec<Vec<f64>>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let model = Model::build(&config.model, &config.model_options)?;
    write_json(&out.join(MODEL), &model.artifacts)?;
    let theta = theta.unwrap_or_else(|| model.true_params().to_vec());
    ensure!(
        theta.len() == model.prior().dim(),
        "theta has {} entries, the model has {} parameters",
        theta.len(),
        model.prior().dim()
    );
    let rows: Vec<Vec<f64>> = (0..count as u64)
        .map(|i| model.simulator.simulate(&theta, &mut substream(config.seed, i)))
        .collect::<snl_core::Result<_>>()?;
    let header = (1..=model.simulator.data_dim())
        .map(|i| format!("x_{i}"))
        .collect::<Vec<_>>()
        .join(",");
    write_matrix(&out.join(SIMULATIONS), &header, &rows)?;
    Ok(rows)
}
