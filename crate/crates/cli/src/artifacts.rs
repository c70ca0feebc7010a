//! File names and small readers/writers shared by the subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use snl_core::simulators::registry::ModelArtifacts;

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";
pub const MODEL: &str = "model.json";
pub const STORE: &str = "store.jsonl";
pub const ROUNDS: &str = "rounds.csv";
pub const SAMPLES: &str = "samples.csv";
pub const POPULATIONS: &str = "populations.jsonl";
pub const FLOWS: &str = "flows";
pub const METRICS: &str = "metrics.csv";
pub const SBC: &str = "sbc.json";
pub const SBC_HISTOGRAM: &str = "sbc_histogram.csv";
pub const SIMULATIONS: &str = "simulations.csv";

pub const ROUNDS_HEADER: &str = "round,sims,median_dist,val_loss,seconds";
pub const METRICS_HEADER: &str = "metric,method,simulations,value";
pub const CURVE_HEADER: &str = "method,simulations,value,seed";
pub const SBC_HEADER: &str = "seed,param,rank,count,band_lower,band_upper";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

/// Simulator calls counted when a round (SNL) or population (SMC-ABC)
/// finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub simulations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub seed: u64,
    pub pilot_seed: Option<u64>,
    pub observation_seed: Option<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Calls seen by the counting wrapper around the simulator.
    pub simulator_calls: u64,
    /// Calls reported by the method itself.
    pub method_simulations: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_model(dir: &Path) -> Result<ModelArtifacts> {
    let path = dir.join(MODEL);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn flow_path(dir: &Path, round: usize) -> PathBuf {
    dir.join(FLOWS).join(format!("round_{round}.json"))
}

pub fn theta_header(dim: usize) -> String {
    (1..=dim).map(|i| format!("theta_{i}")).collect::<Vec<_>>().join(",")
}

pub fn join_row(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes rows of numbers under `header`.
pub fn write_matrix(path: &Path, header: &str, rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::with_capacity(rows.len() * 64);
    out.push_str(header);
    out.push('\n');
    for r in rows {
        out.push_str(&join_row(r));
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Reads a numeric CSV written by [`write_matrix`]; returns the rows.
pub fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next().is_none() {
        bail!("{} is empty", path.display());
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| v.parse::<f64>().with_context(|| format!("bad number '{v}' in {}", path.display())))
                .collect()
        })
        .collect()
}

pub fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = fs::OpenOptions::new()
        .append(true)
        .create(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(f, "{line}")?;
    Ok(())
}
