//! Named models: prior, simulator, ground truth, whitening and observed
//! data, all reproducible from fixed seeds.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lotka_volterra::{lv_raw_features, lv_simulate, lv_true_params};
use super::mg1::MG1_TRUE_PARAMS;
use super::toy::TOY_TRUE_PARAMS;
use super::whitening::pilot_whitening;
use super::{LotkaVolterra, Mg1Queue, Prior, Simulator, ToyModel, Whitening, WhiteningMode};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, substream};

pub const MODEL_NAMES: [&str; 3] = ["toy", "mg1", "lotka_volterra"];
/// Base seed of every pilot run.
pub const PILOT_SEED: u64 = 20_190_001;
/// Base seed of every observed dataset.
pub const OBSERVATION_SEED: u64 = 20_190_002;
pub const DEFAULT_PILOT_SIZE: usize = 1000;
const PILOT_RETRIES: usize = 100;
/// Standard deviation of the Gaussian factor of the oscillating-regime
/// Lotka-Volterra prior.
pub const LV_OSC_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorVariant {
    #[default]
    Broad,
    /// Lotka-Volterra only: broad box times a Gaussian around the truth.
    Osc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelOptions {
    pub prior: PriorVariant,
    pub pilot_size: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            prior: PriorVariant::Broad,
            pilot_size: DEFAULT_PILOT_SIZE,
        }
    }
}

/// Everything needed to rebuild a model without rerunning its pilot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifacts {
    pub name: String,
    pub prior: Prior,
    pub true_params: Vec<f64>,
    pub observed: Vec<f64>,
    pub observed_raw: Vec<f64>,
    pub whitening: Option<Whitening>,
    pub pilot_seed: u64,
    pub observation_seed: u64,
    pub pilot_size: usize,
}

#[derive(Clone)]
pub struct Model {
    pub artifacts: ModelArtifacts,
    pub simulator: Arc<dyn Simulator>,
}

impl std::fmt::Debug for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Model").field("artifacts", &self.artifacts).finish()
    }
}

fn model_index(name: &str) -> Result<u64> {
    MODEL_NAMES
        .iter()
        .position(|n| *n == name)
        .map(|i| i as u64)
        .ok_or_else(|| Error::Unknown {
            kind: "model",
            name: name.to_string(),
            known: MODEL_NAMES.join(", "),
        })
}

fn prior_for(name: &str, variant: PriorVariant) -> Result<Prior> {
    match (name, variant) {
        ("toy", PriorVariant::Broad) => Prior::uniform_box(vec![-3.0; 5], vec![3.0; 5]),
        ("mg1", PriorVariant::Broad) => Prior::uniform_box_relative(
            vec![0.0, 0.0, 0.0],
            vec![10.0, 10.0, 1.0 / 3.0],
            vec![None, Some(0), None],
        ),
        ("lotka_volterra", PriorVariant::Broad) => Prior::uniform_box(vec![-5.0; 4], vec![2.0; 4]),
        ("lotka_volterra", PriorVariant::Osc) => {
            Prior::truncated_gaussian_box(lv_true_params().to_vec(), LV_OSC_SCALE, vec![-5.0; 4], vec![2.0; 4])
        }
        (_, PriorVariant::Osc) => Err(Error::InvalidArgument(format!(
            "model '{name}' has no oscillating-regime prior"
        ))),
        _ => unreachable!("model name validated"),
    }
}

/// Raw (unwhitened) summary statistics of `n` prior-predictive runs.
fn pilot_run<F>(prior: &Prior, n: usize, seed: u64, raw: F) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64], &mut crate::rng::Rng) -> Result<Vec<f64>> + Sync,
{
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            // a failed pilot run is redrawn from the same stream
            let mut last = String::new();
            for _ in 0..PILOT_RETRIES {
                let theta = prior.sample(&mut rng);
                match raw(&theta, &mut rng) {
                    Ok(x) if x.iter().all(|v| v.is_finite()) => return Ok(x),
                    Ok(_) => last = "non-finite statistics".into(),
                    Err(e) => last = e.to_string(),
                }
            }
            Err(Error::RetriesExhausted {
                retries: PILOT_RETRIES,
                last,
            })
        })
        .collect()
}

impl Model {
    pub fn build(name: &str, options: &ModelOptions) -> Result<Self> {
        let index = model_index(name)?;
        let prior = prior_for(name, options.prior)?;
        let pilot_seed = derive_seed(PILOT_SEED, index);
        let observation_seed = derive_seed(OBSERVATION_SEED, index);
        let mut obs_rng = substream(observation_seed, 0);
        let (true_params, observed_raw, whitening) = match name {
            "toy" => {
                let theta = TOY_TRUE_PARAMS.to_vec();
                let x = ToyModel.simulate(&theta, &mut obs_rng)?;
                (theta, x, None)
            }
            "mg1" => {
                let queue = Mg1Queue::default();
                let pilot = pilot_run(&prior, options.pilot_size, pilot_seed, |t, r| queue.raw_quantiles(t, r))?;
                let w = pilot_whitening(&pilot, WhiteningMode::Full)?;
                let theta = MG1_TRUE_PARAMS.to_vec();
                let x = queue.raw_quantiles(&theta, &mut obs_rng)?;
                (theta, x, Some(w))
            }
            _ => {
                let pilot = pilot_run(&prior, options.pilot_size, pilot_seed, |t, r| {
                    lv_raw_features(&lv_simulate(t, r)?)
                })?;
                let w = pilot_whitening(&pilot, WhiteningMode::Diagonal)?;
                let theta = lv_true_params().to_vec();
                let x = lv_raw_features(&lv_simulate(&theta, &mut obs_rng)?)?;
                (theta, x, Some(w))
            }
        };
        let observed = match &whitening {
            Some(w) => w.apply(&observed_raw)?,
            None => observed_raw.clone(),
        };
        Self::from_artifacts(ModelArtifacts {
            name: name.to_string(),
            prior,
            true_params,
            observed,
            observed_raw,
            whitening,
            pilot_seed,
            observation_seed,
            pilot_size: options.pilot_size,
        })
    }

    pub fn from_artifacts(artifacts: ModelArtifacts) -> Result<Self> {
        model_index(&artifacts.name)?;
        artifacts.prior.validate()?;
        let simulator: Arc<dyn Simulator> = match artifacts.name.as_str() {
            "toy" => Arc::new(ToyModel),
            "mg1" => Arc::new(Mg1Queue {
                whitening: artifacts.whitening.clone(),
                ..Mg1Queue::default()
            }),
            _ => Arc::new(LotkaVolterra {
                whitening: artifacts.whitening.clone(),
            }),
        };
        crate::error::ensure_dim("observed data", simulator.data_dim(), artifacts.observed.len())?;
        crate::error::ensure_dim("prior dimension", simulator.param_dim(), artifacts.prior.dim())?;
        Ok(Self {
            artifacts,
            simulator,
        })
    }

    pub fn name(&self) -> &str {
        &self.artifacts.name
    }

    pub fn prior(&self) -> &Prior {
        &self.artifacts.prior
    }

    pub fn observed(&self) -> &[f64] {
        &self.artifacts.observed
    }

    pub fn true_params(&self) -> &[f64] {
        &self.artifacts.true_params
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_model_lists_registry() {
        let err = Model::build("hodgkin_huxley", &ModelOptions::default()).unwrap_err();
        let msg = err.to_string();
        for name in MODEL_NAMES {
            assert!(msg.contains(name), "{msg}");
        }
    }

    #[test]
    fn toy_model_is_reproducible() {
        let a = Model::build("toy", &ModelOptions::default()).unwrap();
        let b = Model::build("toy", &ModelOptions::default()).unwrap();
        assert_eq!(a.artifacts, b.artifacts);
        assert_eq!(a.observed().len(), 8);
        assert_eq!(a.true_params(), &TOY_TRUE_PARAMS);
    }

    #[test]
    fn mg1_artifacts_round_trip() {
        let options = ModelOptions {
            pilot_size: 200,
            ..ModelOptions::default()
        };
        let model = Model::build("mg1", &options).unwrap();
        let text = serde_json::to_string(&model.artifacts).unwrap();
        let back: ModelArtifacts = serde_json::from_str(&text).unwrap();
        assert_eq!(back, model.artifacts);
        let w = model.artifacts.whitening.as_ref().unwrap();
        let raw = w.unapply(model.observed()).unwrap();
        for (a, b) in raw.iter().zip(&model.artifacts.observed_raw) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn osc_prior_only_for_lotka_volterra() {
        let options = ModelOptions {
            prior: PriorVariant::Osc,
            pilot_size: 20,
        };
        assert!(Model::build("toy", &options).is_err());
    }
}
