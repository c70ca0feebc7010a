//! Experiment configuration: one JSON file describes one run.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snl_core::baselines::{SlConfig, SmcAbcConfig};
use snl_core::engine::SnlConfig;
use snl_core::simulators::{ModelOptions, MODEL_NAMES};
use snl_core::Error;

pub const METHOD_NAMES: [&str; 4] = ["snl", "nl", "sl", "smc_abc"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Snl,
    Nl,
    Sl,
    SmcAbc,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Snl => "snl",
            Method::Nl => "nl",
            Method::Sl => "sl",
            Method::SmcAbc => "smc_abc",
        })
    }
}

/// Posterior samples written after a run and used by the diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSettings {
    pub samples: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for PosteriorSettings {
    fn default() -> Self {
        Self {
            samples: 1000,
            burn_in: 200,
            thin: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbcSettings {
    pub trials: usize,
    /// Posterior draws per trial (`L`).
    pub posterior_samples: usize,
    /// Sweeps between retained draws.
    pub thin: usize,
}

impl Default for SbcSettings {
    fn default() -> Self {
        Self {
            trials: 100,
            posterior_samples: 9,
            thin: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticSettings {
    /// Exact-posterior draws for the toy model's MMD reference.
    pub reference_samples: usize,
    /// Simulator and model draws per goodness-of-fit estimate; 0 disables it.
    pub gof_samples: usize,
    pub sbc: Option<SbcSettings>,
}

impl Default for DiagnosticSettings {
    fn default() -> Self {
        Self {
            reference_samples: 1000,
            gof_samples: 1000,
            sbc: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: String,
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub model_options: ModelOptions,
    /// Used by `snl`; `nl` takes its simulation count from
    /// `sims_per_round` and ignores `rounds`.
    #[serde(default)]
    pub snl: SnlConfig,
    #[serde(default)]
    pub sl: SlConfig,
    #[serde(default)]
    pub smc_abc: SmcAbcConfig,
    #[serde(default)]
    pub posterior: PosteriorSettings,
    #[serde(default)]
    pub diagnostics: DiagnosticSettings,
}

/// A configuration problem, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        ConfigError(e.to_string())
    }
}

fn at_least_one(name: &str, value: usize) -> Result<(), ConfigError> {
    if value == 0 {
        return Err(ConfigError(format!("{name} must be >= 1")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !MODEL_NAMES.contains(&self.model.as_str()) {
            return Err(Error::Unknown {
                kind: "model",
                name: self.model.clone(),
                known: MODEL_NAMES.join(", "),
            }
            .into());
        }
        at_least_one("posterior.samples", self.posterior.samples)?;
        at_least_one("posterior.thin", self.posterior.thin)?;
        match self.method {
            Method::Snl | Method::Nl => {
                at_least_one("snl.rounds", self.snl.rounds)?;
                self.snl.validate()?;
            }
            Method::Sl => {
                at_least_one("sl.batch_size", self.sl.batch_size)?;
                at_least_one("sl.n_samples", self.sl.n_samples)?;
                at_least_one("sl.thin", self.sl.thin)?;
            }
            Method::SmcAbc => {
                at_least_one("smc_abc.particles", self.smc_abc.particles)?;
                at_least_one("smc_abc.max_rounds", self.smc_abc.max_rounds)?;
            }
        }
        if let Some(sbc) = &self.diagnostics.sbc {
            at_least_one("diagnostics.sbc.trials", sbc.trials)?;
            at_least_one("diagnostics.sbc.posterior_samples", sbc.posterior_samples)?;
            at_least_one("diagnostics.sbc.thin", sbc.thin)?;
        }
        Ok(())
    }

    /// Configuration of the SNL engine with the run seed applied; for `nl`
    /// a single round.
    pub fn engine_config(&self) -> SnlConfig {
        let rounds = if self.method == Method::Nl { 1 } else { self.snl.rounds };
        SnlConfig {
            rounds,
            seed: self.seed,
            ..self.snl.clone()
        }
    }
}
