//! `diagnose`: accuracy metrics per round or population, and optionally
//! simulation-based calibration, for a finished run.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};
use snl_core::baselines::ParticlePopulation;
use snl_core::diagnostics::sbc::{uniformity_band, SbcResult};
use snl_core::diagnostics::{gaussian_baseline_gof, kde_log_prob, likelihood_gof, mmd, sbc_ranks, Bandwidth};
use snl_core::engine::{run_snl, PosteriorApprox};
use snl_core::flow::ConditionalMaf;
use snl_core::rng::{derive_seed, seeded};
use snl_core::simulators::toy::toy_exact_posterior;
use snl_core::simulators::Model;

use crate::artifacts::*;
use crate::config::{ExperimentConfig, Method, SbcSettings};

/// Seed of the toy model's exact-posterior reference sample; shared by
/// every run so all methods are compared against the same draws.
pub const REFERENCE_SEED: u64 = 20_190_003;
pub const REFERENCE_BURN_IN: usize = 1000;
pub const REFERENCE_THIN: usize = 10;

const LABEL_ROUND_SAMPLES: u64 = 0x524f;
const LABEL_GOF: u64 = 0x474f;
const LABEL_SBC: u64 = 0x5342;
const LABEL_RESAMPLE: u64 = 0x5253;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub method: String,
    pub simulations: u64,
    pub value: f64,
}

impl MetricRow {
    fn new(metric: &str, method: &str, simulations: u64, value: f64) -> Self {
        Self {
            metric: metric.into(),
            method: method.into(),
            simulations,
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbcSummary {
    pub result: SbcResult,
    pub p_values: Vec<f64>,
    pub band: (u64, u64),
}

/// Exact-posterior draws for the toy model.
pub fn toy_reference(model: &Model, n: usize) -> Result<Vec<Vec<f64>>> {
    Ok(toy_exact_posterior(
        model.prior(),
        model.observed(),
        n,
        REFERENCE_BURN_IN,
        REFERENCE_THIN,
        REFERENCE_SEED,
    )?)
}

struct RunContext<'a> {
    config: &'a ExperimentConfig,
    model: &'a Model,
    reference: Option<Vec<Vec<f64>>>,
    method: String,
}

impl RunContext<'_> {
    /// MMD to the reference (toy model only) and negative KDE log
    /// probability of the true parameters.
    fn sample_metrics(&self, samples: &[Vec<f64>], simulations: u64, rows: &mut Vec<MetricRow>) -> Result<()> {
        if let Some(reference) = &self.reference {
            rows.push(MetricRow::new("mmd", &self.method, simulations, mmd(samples, reference)?));
        }
        if samples.len() >= 2 {
            let lp = kde_log_prob(samples, self.model.true_params(), &Bandwidth::Scott)?;
            rows.push(MetricRow::new("nll", &self.method, simulations, -lp));
        }
        Ok(())
    }
}

/// Computes the metrics of the run in `dir` and writes them to
/// `metrics.csv` (and the SBC files when configured).
pub fn diagnose(dir: &Path) -> Result<Vec<MetricRow>> {
    let manifest = Manifest::read(dir)?;
    if manifest.status != RunStatus::Complete {
        bail!("run in {} did not complete: {}", dir.display(), manifest.error.unwrap_or_default());
    }
    let config = &manifest.config;
    let model = Model::from_artifacts(read_model(dir)?)?;
    let reference = if model.name() == "toy" && config.diagnostics.reference_samples >= 2 {
        Some(toy_reference(&model, config.diagnostics.reference_samples)?)
    } else {
        None
    };
    let ctx = RunContext {
        config,
        model: &model,
        reference,
        method: config.method.to_string(),
    };
    let mut rows = Vec::new();
    match config.method {
        Method::Snl | Method::Nl => neural_metrics(&ctx, &manifest, dir, &mut rows)?,
        Method::Sl => {
            let samples = read_matrix(&dir.join(SAMPLES))?;
            ctx.sample_metrics(&samples, manifest.simulator_calls, &mut rows)?;
        }
        Method::SmcAbc => smc_metrics(&ctx, &manifest, dir, &mut rows)?,
    }
    let mut text = format!("{METRICS_HEADER}\n");
    for r in &rows {
        text.push_str(&format!("{},{},{},{}\n", r.metric, r.method, r.simulations, r.value));
    }
    fs::write(dir.join(METRICS), text)?;

    if let Some(sbc) = &config.diagnostics.sbc {
        match config.method {
            Method::Snl | Method::Nl => {
                let summary = calibrate(config, &model, sbc)?;
                write_sbc(dir, config.seed, &summary)?;
            }
            _ => log::warn!("calibration is only run for snl and nl; skipped"),
        }
    }
    Ok(rows)
}

fn neural_metrics(ctx: &RunContext<'_>, manifest: &Manifest, dir: &Path, rows: &mut Vec<MetricRow>) -> Result<()> {
    let config = ctx.config;
    let model = ctx.model;
    let theta_star = model.true_params();
    let p = &config.posterior;
    let gof_n = config.diagnostics.gof_samples;
    let gof_seed = derive_seed(config.seed, LABEL_GOF);
    if gof_n >= 2 {
        let mut rng = seeded(gof_seed);
        let untrained = ConditionalMaf::new(model.simulator.data_dim(), model.prior().dim(), config.snl.flow.clone(), &mut rng)?;
        rows.push(MetricRow::new(
            "gof",
            "untrained",
            0,
            likelihood_gof(&untrained, &*model.simulator, theta_star, gof_n, gof_seed)?,
        ));
        rows.push(MetricRow::new(
            "gof",
            "gaussian",
            gof_n as u64,
            gaussian_baseline_gof(&*model.simulator, theta_star, gof_n, gof_seed)?,
        ));
    }
    let rounds = read_matrix(&dir.join(ROUNDS))?;
    for (cp, round_row) in manifest.checkpoints.iter().zip(&rounds) {
        let sims = cp.simulations;
        rows.push(MetricRow::new("median_distance", &ctx.method, sims, round_row[2]));
        let flow = ConditionalMaf::load(&flow_path(dir, cp.round))
            .with_context(|| format!("loading flow of round {}", cp.round))?;
        if gof_n >= 2 {
            rows.push(MetricRow::new(
                "gof",
                &ctx.method,
                sims,
                likelihood_gof(&flow, &*model.simulator, theta_star, gof_n, gof_seed)?,
            ));
        }
        let post = PosteriorApprox::new(flow, model.prior().clone(), model.observed().to_vec())?;
        let seed = derive_seed(derive_seed(config.seed, LABEL_ROUND_SAMPLES), cp.round as u64);
        let samples = post.sample(p.samples, p.burn_in, p.thin, seed)?;
        ctx.sample_metrics(&samples, sims, rows)?;
    }
    Ok(())
}

fn smc_metrics(ctx: &RunContext<'_>, manifest: &Manifest, dir: &Path, rows: &mut Vec<MetricRow>) -> Result<()> {
    let text = fs::read_to_string(dir.join(POPULATIONS))?;
    let n = ctx.config.posterior.samples;
    for (line, cp) in text.lines().zip(&manifest.checkpoints) {
        let pop: ParticlePopulation = serde_json::from_str(line)?;
        let mut rng = seeded(derive_seed(derive_seed(ctx.config.seed, LABEL_RESAMPLE), pop.round as u64));
        let pick = WeightedIndex::new(&pop.weights).map_err(|e| anyhow!("bad particle weights: {e}"))?;
        let samples: Vec<Vec<f64>> = (0..n).map(|_| pop.particles[pick.sample(&mut rng)].clone()).collect();
        ctx.sample_metrics(&samples, cp.simulations, rows)?;
    }
    Ok(())
}

/// SBC of the configured SNL/NL procedure on the run's model.
pub fn calibrate(config: &ExperimentConfig, model: &Model, sbc: &SbcSettings) -> Result<SbcSummary> {
    let engine = config.engine_config();
    let burn_in = config.posterior.burn_in;
    let prior = model.prior();
    let inference = |x: &[f64], seed: u64| -> snl_core::Result<Vec<Vec<f64>>> {
        let trial = snl_core::engine::SnlConfig {
            seed,
            ..engine.clone()
        };
        let run = run_snl(prior, &*model.simulator, x, &trial)?;
        run.posterior
            .sample(sbc.posterior_samples, burn_in, sbc.thin, derive_seed(seed, LABEL_SBC))
    };
    let result = sbc_ranks(
        prior,
        &*model.simulator,
        inference,
        sbc.trials,
        sbc.posterior_samples,
        derive_seed(config.seed, LABEL_SBC),
    )?;
    if !result.skipped.is_empty() {
        log::warn!("{} calibration trials skipped", result.skipped.len());
    }
    Ok(summarize(result))
}

pub fn summarize(result: SbcResult) -> SbcSummary {
    let p_values = (0..result.param_dim).map(|i| result.chi_square_p_value(i)).collect();
    let band = uniformity_band(result.records.len() as u64, result.posterior_samples + 1, 0.99);
    SbcSummary {
        result,
        p_values,
        band,
    }
}

fn write_sbc(dir: &Path, seed: u64, summary: &SbcSummary) -> Result<()> {
    write_json(&dir.join(SBC), summary)?;
    let mut text = format!("{SBC_HEADER}\n");
    for param in 0..summary.result.param_dim {
        for (rank, count) in summary.result.histogram(param).iter().enumerate() {
            text.push_str(&format!(
                "{seed},{},{rank},{count},{},{}\n",
                param + 1,
                summary.band.0,
                summary.band.1
            ));
        }
    }
    fs::write(dir.join(SBC_HISTOGRAM), text)?;
    Ok(())
}
