//! Conditional masked autoregressive flow.
//!
//! The density direction runs data through `layers[0]`, `norms[0]`,
//! `layers[1]`, ..., `layers[K-1]` to the standard-normal base. Layer `k`
//! uses the natural coordinate ordering for even `k` and the reversed one
//! for odd `k`.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::batch_norm::{BatchNorm, BnCache, BnParams};
use super::made::{MadeCache, MadeLayer, MadeParams};
use super::masks::{build_masks, natural_ordering, reversed_ordering};
use crate::error::{ensure_dim, ensure_finite, Error, Result};

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub n_layers: usize,
    pub hidden_sizes: Vec<usize>,
    pub batch_norm: bool,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n_layers: 5,
            hidden_sizes: vec![50, 50],
            batch_norm: true,
        }
    }
}

/// Whether batch-norm layers use minibatch moments (`Train`) or their
/// running moments (`Eval`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMaf {
    pub data_dim: usize,
    pub cond_dim: usize,
    pub config: FlowConfig,
    pub layers: Vec<MadeLayer>,
    pub norms: Vec<BatchNorm>,
}

/// Gradient with the same layout as the flow's trainable parameters.
#[derive(Debug, Clone)]
pub struct FlowGrads {
    pub layers: Vec<MadeParams>,
    pub norms: Vec<BnParams>,
}

impl FlowGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.slices());
        }
        for n in &self.norms {
            out.extend(n.slices());
        }
        out
    }
}

enum NormCache {
    Batch(BnCache),
    Eval(Array2<f64>),
}

/// Minibatch moments seen by each batch-norm layer in a training pass.
pub(crate) type BatchMoments = Vec<(Array1<f64>, Array1<f64>)>;

fn standard_normal_log_density(u: &Array2<f64>) -> Array1<f64> {
    let d = u.ncols() as f64;
    u.map_axis(Axis(1), |row| {
        -0.5 * row.iter().map(|v| v * v).sum::<f64>() - d * HALF_LOG_TWO_PI
    })
}

fn broadcast_rows(v: &[f64], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, v.len()), |(_, j)| v[j])
}

impl ConditionalMaf {
    pub fn new<R: Rng + ?Sized>(
        data_dim: usize,
        cond_dim: usize,
        config: FlowConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.n_layers == 0 {
            return Err(Error::InvalidArgument("flow needs at least one layer".into()));
        }
        let mut layers = Vec::with_capacity(config.n_layers);
        for k in 0..config.n_layers {
            let ordering = if k % 2 == 0 {
                natural_ordering(data_dim)
            } else {
                reversed_ordering(data_dim)
            };
            let masks = build_masks(data_dim, &config.hidden_sizes, cond_dim, &ordering)?;
            layers.push(MadeLayer::new(masks, rng));
        }
        let norms = if config.batch_norm {
            (1..config.n_layers).map(|_| BatchNorm::new(data_dim)).collect()
        } else {
            Vec::new()
        };
        Ok(Self {
            data_dim,
            cond_dim,
            config,
            layers,
            norms,
        })
    }

    fn check_batch(&self, xs: ArrayView2<f64>, thetas: ArrayView2<f64>) -> Result<()> {
        ensure_dim("data dimension", self.data_dim, xs.ncols())?;
        ensure_dim("parameter dimension", self.cond_dim, thetas.ncols())?;
        ensure_dim("batch rows", xs.nrows(), thetas.nrows())?;
        if xs.nrows() == 0 {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        Ok(())
    }

    /// Maps data to the base space; returns `u` and the accumulated
    /// log-determinant per row.
    pub fn to_base(
        &self,
        xs: ArrayView2<f64>,
        thetas: ArrayView2<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_batch(xs, thetas)?;
        let mut logdet = Array1::zeros(xs.nrows());
        let mut h = xs.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let (u, ld) = layer.forward_batch(h.view(), thetas);
            logdet += &ld;
            h = u;
            if let Some(norm) = self.norms.get(k) {
                let (y, ld) = match mode {
                    Mode::Train => norm.forward_batch(h.view()),
                    Mode::Eval => norm.forward_eval(h.view()),
                };
                logdet += ld;
                h = y;
            }
        }
        Ok((h, logdet))
    }

    /// Generative direction using running batch-norm moments.
    pub fn from_base(&self, us: ArrayView2<f64>, thetas: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(us, thetas)?;
        let mut h = us.to_owned();
        for k in (0..self.layers.len()).rev() {
            if let Some(norm) = self.norms.get(k) {
                h = norm.inverse_eval(h.view());
            }
            h = self.layers[k].inverse_batch(h.view(), thetas);
        }
        if h.iter().all(|v| v.is_finite()) {
            Ok(h)
        } else {
            Err(Error::NonFinite(
                "flow inverse pass (sample left the representable range)".into(),
            ))
        }
    }

    pub fn log_prob_batch(
        &self,
        xs: ArrayView2<f64>,
        thetas: ArrayView2<f64>,
        mode: Mode,
    ) -> Result<Array1<f64>> {
        let (u, logdet) = self.to_base(xs, thetas, mode)?;
        Ok(standard_normal_log_density(&u) + logdet)
    }

    /// `log q(x | theta)` in evaluation mode.
    pub fn log_prob(&self, x: &[f64], theta: &[f64]) -> Result<f64> {
        ensure_dim("data dimension", self.data_dim, x.len())?;
        ensure_dim("parameter dimension", self.cond_dim, theta.len())?;
        let xs = ArrayView2::from_shape((1, x.len()), x).expect("row");
        let ts = ArrayView2::from_shape((1, theta.len()), theta).expect("row");
        Ok(self.log_prob_batch(xs, ts, Mode::Eval)?[0])
    }

    pub fn sample<R: Rng + ?Sized>(&self, theta: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.sample_n(theta, 1, rng)?.into_raw_vec_and_offset().0)
    }

    /// `n` draws from `q(. | theta)`, one per row.
    pub fn sample_n<R: Rng + ?Sized>(
        &self,
        theta: &[f64],
        n: usize,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        ensure_dim("parameter dimension", self.cond_dim, theta.len())?;
        ensure_finite("conditioning parameters", theta)?;
        let z = Array2::from_shape_simple_fn((n, self.data_dim), || rng.sample(StandardNormal));
        self.from_base(z.view(), broadcast_rows(theta, n).view())
    }

    /// Mean log-density over the batch together with its gradient with
    /// respect to every trainable parameter. In `Train` mode also returns the
    /// minibatch moments seen by each batch-norm layer.
    pub fn mean_log_prob_and_grad(
        &self,
        xs: ArrayView2<f64>,
        thetas: ArrayView2<f64>,
        mode: Mode,
    ) -> Result<(f64, FlowGrads, BatchMoments)> {
        self.check_batch(xs, thetas)?;
        let n = xs.nrows();
        let mut logdet = Array1::zeros(n);
        let mut h = xs.to_owned();
        let mut made_caches: Vec<MadeCache> = Vec::with_capacity(self.layers.len());
        let mut norm_caches: Vec<NormCache> = Vec::with_capacity(self.norms.len());
        for (k, layer) in self.layers.iter().enumerate() {
            let (u, ld, cache) = layer.forward_cached(h.view(), thetas);
            logdet += &ld;
            made_caches.push(cache);
            h = u;
            if let Some(norm) = self.norms.get(k) {
                match mode {
                    Mode::Train => {
                        let (y, ld, cache) = norm.forward_cached(h.view());
                        logdet += ld;
                        norm_caches.push(NormCache::Batch(cache));
                        h = y;
                    }
                    Mode::Eval => {
                        let (y, ld) = norm.forward_eval(h.view());
                        logdet += ld;
                        norm_caches.push(NormCache::Eval(h));
                        h = y;
                    }
                }
            }
        }
        let logp = standard_normal_log_density(&h) + logdet;
        let objective = logp.mean().expect("non-empty batch");

        let nf = n as f64;
        let mut grads = FlowGrads {
            layers: self.layers.iter().map(|l| MadeParams::zeros(&l.masks)).collect(),
            norms: self.norms.iter().map(|_| BnParams::zeros(self.data_dim)).collect(),
        };
        let g_logdet = Array1::from_elem(n, 1.0 / nf);
        let mut g = h.mapv(|v| -v / nf);
        for k in (0..self.layers.len()).rev() {
            if let Some(norm) = self.norms.get(k) {
                g = match &norm_caches[k] {
                    NormCache::Batch(cache) => norm.backward(cache, &g, 1.0, &mut grads.norms[k]),
                    NormCache::Eval(input) => {
                        norm.backward_eval(&g, &mut grads.norms[k], 1.0, input.view())
                    }
                };
            }
            g = self.layers[k].backward(&made_caches[k], thetas, &g, &g_logdet, &mut grads.layers[k]);
        }

        let moments = norm_caches
            .into_iter()
            .filter_map(|c| match c {
                NormCache::Batch(c) => Some((c.mean, c.var)),
                NormCache::Eval(_) => None,
            })
            .collect();
        Ok((objective, grads, moments))
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.params.slices());
        }
        for n in &self.norms {
            out.extend(n.params.slices());
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in self.layers.iter_mut() {
            out.extend(l.params.slices_mut());
        }
        for n in self.norms.iter_mut() {
            out.extend(n.params.slices_mut());
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub(crate) fn update_running_moments(&mut self, moments: &BatchMoments) {
        for (norm, (m, v)) in self.norms.iter_mut().zip(moments) {
            norm.update_running(m, v);
        }
    }

    /// Sets every batch-norm layer's running moments to the exact moments
    /// of its input over the given data set, layer by layer.
    pub fn refresh_batch_norm(&mut self, xs: ArrayView2<f64>, thetas: ArrayView2<f64>) -> Result<()> {
        self.check_batch(xs, thetas)?;
        let mut h = xs.to_owned();
        for k in 0..self.layers.len() {
            let (u, _) = self.layers[k].forward_batch(h.view(), thetas);
            h = u;
            if k < self.norms.len() {
                let (mean, var) = super::batch_norm::moments(h.view());
                self.norms[k].set_running(mean, var);
                h = self.norms[k].forward_eval(h.view()).0;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut flow: ConditionalMaf = serde_json::from_str(text)?;
        for layer in flow.layers.iter_mut() {
            layer.masks = layer.masks.rebuild()?;
            let expected = MadeParams::zeros(&layer.masks);
            let shapes_match = expected
                .slices()
                .iter()
                .zip(layer.params.slices())
                .all(|(a, b)| a.len() == b.len())
                && expected.slices().len() == layer.params.slices().len();
            if !shapes_match || layer.masks.data_dim != flow.data_dim {
                return Err(Error::InvalidArgument(
                    "serialized flow has inconsistent layer shapes".into(),
                ));
            }
        }
        if flow
            .norms
            .iter()
            .any(|n| n.running_var.iter().any(|&v| !(v > 0.0) || !v.is_finite()))
        {
            return Err(Error::InvalidArgument("non-positive running variance".into()));
        }
        Ok(flow)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_architecture() {
        let flow = ConditionalMaf::new(8, 5, FlowConfig::default(), &mut seeded(0)).unwrap();
        assert_eq!(flow.layers.len(), 5);
        assert_eq!(flow.norms.len(), 4);
        for (k, layer) in flow.layers.iter().enumerate() {
            assert_eq!(layer.masks.hidden_sizes(), vec![50, 50]);
            let expected = if k % 2 == 0 {
                natural_ordering(8)
            } else {
                reversed_ordering(8)
            };
            assert_eq!(layer.masks.ordering, expected);
        }
        assert!(flow.norms.iter().all(|n| n.running_var.iter().all(|&v| v > 0.0)));
    }

    #[test]
    fn identity_at_initialization() {
        let flow = ConditionalMaf::new(8, 5, FlowConfig::default(), &mut seeded(1)).unwrap();
        let lp = flow.log_prob(&[0.0; 8], &[0.3, -1.0, 2.0, 0.0, 5.0]).unwrap();
        assert!((lp - (-4.0 * (2.0 * std::f64::consts::PI).ln())).abs() < 1e-12);
        assert!((lp + 7.351_508_1).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let flow = ConditionalMaf::new(2, 1, FlowConfig::default(), &mut seeded(2)).unwrap();
        assert!(matches!(
            flow.log_prob(&[0.0; 3], &[0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            flow.log_prob(&[0.0; 2], &[0.0, 1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = seeded(3);
        let mut flow = ConditionalMaf::new(3, 2, FlowConfig::default(), &mut rng).unwrap();
        for s in flow.param_slices_mut() {
            for v in s.iter_mut() {
                *v += 0.01 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        // restore the mask zeros the perturbation broke
        for layer in flow.layers.iter_mut() {
            for (w, m) in layer.params.hidden_weights.iter_mut().zip(&layer.masks.hidden_masks) {
                *w *= m;
            }
            layer.params.mean_weights *= &layer.masks.output_mask;
            layer.params.log_scale_weights *= &layer.masks.output_mask;
        }
        let text = flow.to_json().unwrap();
        let back = ConditionalMaf::from_json(&text).unwrap();
        assert_eq!(back, flow);
        let x = [0.3, -0.7, 1.9];
        let th = [0.1, 0.2];
        assert_eq!(
            flow.log_prob(&x, &th).unwrap().to_bits(),
            back.log_prob(&x, &th).unwrap().to_bits()
        );
    }
}
