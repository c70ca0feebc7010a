//! One conditional MADE bijection.
//!
//! In the density direction the layer maps data `x` to
//! `u_i = (x_i - mu_i) * exp(-alpha_i)` where `mu_i` and `alpha_i` are
//! computed from `x` restricted to coordinates earlier in the ordering and
//! from the conditioning vector. The log-determinant of that map is
//! `-sum_i alpha_i`.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::masks::MaskSet;
use crate::error::{ensure_dim, ensure_finite, Error, Result};

/// Bound of the smooth clamp applied to the raw log-scale output.
pub const LOG_SCALE_BOUND: f64 = 7.0;

/// Odd Taylor coefficients of `tanh` from `x^3` to `x^21`; truncation
/// error below 1e-17 relative for `|x| < 0.25`.
const TANH_SERIES: [f64; 10] = [
    -3.333_333_333_333_333e-1,
    1.333_333_333_333_333_3e-1,
    -5.396_825_396_825_397e-2,
    2.186_948_853_615_520_3e-2,
    -8.863_235_529_902_197e-3,
    3.592_128_036_572_481e-3,
    -1.455_834_387_051_318_3e-3,
    5.900_274_409_455_86e-4,
    -2.391_291_142_435_524_8e-4,
    9.691_537_956_929_451e-5,
];

/// `tanh` through a single `exp` (a polynomial near zero); agrees with
/// `f64::tanh` to a few ulps.
#[inline]
pub fn tanh(x: f64) -> f64 {
    let a = x.abs();
    if a < 0.25 {
        let z = x * x;
        let p = TANH_SERIES.iter().rev().fold(0.0, |acc, &c| acc * z + c);
        return x + x * z * p;
    }
    let e = (-2.0 * a).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

#[inline]
pub fn squash_log_scale(raw: f64) -> f64 {
    LOG_SCALE_BOUND * (raw / LOG_SCALE_BOUND).tanh()
}

/// Inverse of [`squash_log_scale`]; `alpha` must lie strictly inside the bound.
pub fn unsquash_log_scale(alpha: f64) -> f64 {
    LOG_SCALE_BOUND * (alpha / LOG_SCALE_BOUND).atanh()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadeParams {
    /// `hidden_weights[0]` multiplies the data input, later entries the
    /// previous hidden layer. Masked entries are kept at exactly zero.
    pub hidden_weights: Vec<Array2<f64>>,
    pub hidden_biases: Vec<Array1<f64>>,
    /// Unmasked weights from the conditioning vector into the first hidden layer.
    pub cond_weights: Array2<f64>,
    pub mean_weights: Array2<f64>,
    pub mean_bias: Array1<f64>,
    pub log_scale_weights: Array2<f64>,
    pub log_scale_bias: Array1<f64>,
}

impl MadeParams {
    pub fn zeros(masks: &MaskSet) -> Self {
        let sizes = masks.hidden_sizes();
        let mut fan_in = masks.data_dim;
        let mut hidden_weights = Vec::new();
        for &h in &sizes {
            hidden_weights.push(Array2::zeros((h, fan_in)));
            fan_in = h;
        }
        let last = fan_in;
        Self {
            hidden_weights,
            hidden_biases: sizes.iter().map(|&h| Array1::zeros(h)).collect(),
            cond_weights: Array2::zeros((sizes[0], masks.cond_dim)),
            mean_weights: Array2::zeros((masks.data_dim, last)),
            mean_bias: Array1::zeros(masks.data_dim),
            log_scale_weights: Array2::zeros((masks.data_dim, last)),
            log_scale_bias: Array1::zeros(masks.data_dim),
        }
    }

    /// Same layout as the parameters with 1 where an entry is trainable and
    /// 0 where the connectivity mask pins it to zero.
    pub fn trainable(masks: &MaskSet) -> Self {
        let mut p = Self::zeros(masks);
        for (w, m) in p.hidden_weights.iter_mut().zip(&masks.hidden_masks) {
            w.assign(m);
        }
        p.hidden_biases.iter_mut().for_each(|b| b.fill(1.0));
        p.cond_weights.fill(1.0);
        p.mean_weights.assign(&masks.output_mask);
        p.log_scale_weights.assign(&masks.output_mask);
        p.mean_bias.fill(1.0);
        p.log_scale_bias.fill(1.0);
        p
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for (w, b) in self.hidden_weights.iter().zip(&self.hidden_biases) {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out.push(self.cond_weights.as_slice().expect("standard layout"));
        out.push(self.mean_weights.as_slice().expect("standard layout"));
        out.push(self.mean_bias.as_slice().expect("standard layout"));
        out.push(self.log_scale_weights.as_slice().expect("standard layout"));
        out.push(self.log_scale_bias.as_slice().expect("standard layout"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for (w, b) in self
            .hidden_weights
            .iter_mut()
            .zip(self.hidden_biases.iter_mut())
        {
            out.push(w.as_slice_mut().expect("standard layout"));
            out.push(b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.cond_weights.as_slice_mut().expect("standard layout"));
        out.push(self.mean_weights.as_slice_mut().expect("standard layout"));
        out.push(self.mean_bias.as_slice_mut().expect("standard layout"));
        out.push(self.log_scale_weights.as_slice_mut().expect("standard layout"));
        out.push(self.log_scale_bias.as_slice_mut().expect("standard layout"));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MadeLayer {
    pub masks: MaskSet,
    pub params: MadeParams,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct MadeCache {
    x: Array2<f64>,
    hidden: Vec<Array2<f64>>,
    alpha: Array2<f64>,
    u: Array2<f64>,
    inv_scale: Array2<f64>,
}

impl MadeLayer {
    /// Hidden weights uniform in `+-1/sqrt(fan_in)`, output heads zero, so
    /// a fresh layer is the identity map.
    pub fn new<R: Rng + ?Sized>(masks: MaskSet, rng: &mut R) -> Self {
        let mut params = MadeParams::zeros(&masks);
        let first_fan_in = (masks.data_dim + masks.cond_dim) as f64;
        for (l, w) in params.hidden_weights.iter_mut().enumerate() {
            let fan_in = if l == 0 { first_fan_in } else { w.ncols() as f64 };
            let bound = 1.0 / fan_in.sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            w.zip_mut_with(&masks.hidden_masks[l], |v, &m| *v = m * dist.sample(rng));
        }
        let bound = 1.0 / first_fan_in.sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        params.cond_weights.mapv_inplace(|_| dist.sample(rng));
        Self { masks, params }
    }

    pub fn data_dim(&self) -> usize {
        self.masks.data_dim
    }

    pub fn cond_dim(&self) -> usize {
        self.masks.cond_dim
    }

    /// Hidden activations, means and clamped log-scales for a batch.
    fn conditioner(
        &self,
        x: ArrayView2<f64>,
        theta: ArrayView2<f64>,
    ) -> (Vec<Array2<f64>>, Array2<f64>, Array2<f64>) {
        let p = &self.params;
        let mut hidden = Vec::with_capacity(p.hidden_weights.len());
        let mut a = x.dot(&p.hidden_weights[0].t());
        if self.cond_dim() > 0 {
            general_mat_mul(1.0, &theta, &p.cond_weights.t(), 1.0, &mut a);
        }
        a += &p.hidden_biases[0];
        a.mapv_inplace(tanh);
        hidden.push(a);
        for l in 1..p.hidden_weights.len() {
            let mut a = hidden[l - 1].dot(&p.hidden_weights[l].t());
            a += &p.hidden_biases[l];
            a.mapv_inplace(tanh);
            hidden.push(a);
        }
        let last = hidden.last().expect("at least one hidden layer");
        let mut mu = last.dot(&p.mean_weights.t());
        mu += &p.mean_bias;
        let mut alpha = last.dot(&p.log_scale_weights.t());
        alpha += &p.log_scale_bias;
        alpha.mapv_inplace(squash_log_scale);
        (hidden, mu, alpha)
    }

    /// Density direction for a batch: returns `u` and the per-row
    /// log-determinant.
    pub fn forward_batch(
        &self,
        x: ArrayView2<f64>,
        theta: ArrayView2<f64>,
    ) -> (Array2<f64>, Array1<f64>) {
        let (_, mu, alpha) = self.conditioner(x, theta);
        let mut u = &x - &mu;
        u.zip_mut_with(&alpha, |v, &a| *v *= (-a).exp());
        let logdet = alpha.sum_axis(Axis(1)).mapv(|s| -s);
        (u, logdet)
    }

    pub(crate) fn forward_cached(
        &self,
        x: ArrayView2<f64>,
        theta: ArrayView2<f64>,
    ) -> (Array2<f64>, Array1<f64>, MadeCache) {
        let (hidden, mu, alpha) = self.conditioner(x, theta);
        let inv_scale = alpha.mapv(|a| (-a).exp());
        let u = (&x - &mu) * &inv_scale;
        let logdet = alpha.sum_axis(Axis(1)).mapv(|s| -s);
        let cache = MadeCache {
            x: x.to_owned(),
            hidden,
            alpha,
            u: u.clone(),
            inv_scale,
        };
        (u, logdet, cache)
    }

    /// Backpropagates `g_u = dJ/du` and `g_logdet = dJ/dlogdet` (per row),
    /// accumulating parameter gradients into `grads`. Returns `dJ/dx`.
    pub(crate) fn backward(
        &self,
        cache: &MadeCache,
        theta: ArrayView2<f64>,
        g_u: &Array2<f64>,
        g_logdet: &Array1<f64>,
        grads: &mut MadeParams,
    ) -> Array2<f64> {
        let p = &self.params;
        let g_x_direct = g_u * &cache.inv_scale;
        let g_mu = g_x_direct.mapv(|v| -v);

        let mut g_raw = g_u * &cache.u;
        g_raw.mapv_inplace(|v| -v);
        g_raw -= &g_logdet.view().insert_axis(Axis(1));
        g_raw.zip_mut_with(&cache.alpha, |g, &a| {
            let t = a / LOG_SCALE_BOUND;
            *g *= 1.0 - t * t;
        });

        let last = cache.hidden.last().expect("at least one hidden layer");
        let out_mask = &self.masks.output_mask;
        let mut gw = g_mu.t().dot(last);
        gw *= out_mask;
        grads.mean_weights += &gw;
        grads.mean_bias += &g_mu.sum_axis(Axis(0));
        let mut gw = g_raw.t().dot(last);
        gw *= out_mask;
        grads.log_scale_weights += &gw;
        grads.log_scale_bias += &g_raw.sum_axis(Axis(0));

        let mut g_h = g_mu.dot(&p.mean_weights);
        general_mat_mul(1.0, &g_raw, &p.log_scale_weights, 1.0, &mut g_h);

        let n_hidden = cache.hidden.len();
        for l in (0..n_hidden).rev() {
            let mut g_a = g_h;
            g_a.zip_mut_with(&cache.hidden[l], |g, &h| *g *= 1.0 - h * h);
            let input = if l == 0 { &cache.x } else { &cache.hidden[l - 1] };
            let mut gw = g_a.t().dot(input);
            gw *= &self.masks.hidden_masks[l];
            grads.hidden_weights[l] += &gw;
            grads.hidden_biases[l] += &g_a.sum_axis(Axis(0));
            if l == 0 {
                if self.cond_dim() > 0 {
                    general_mat_mul(1.0, &g_a.t(), &theta, 1.0, &mut grads.cond_weights);
                }
                let mut g_x = g_x_direct;
                general_mat_mul(1.0, &g_a, &p.hidden_weights[0], 1.0, &mut g_x);
                return g_x;
            }
            g_h = g_a.dot(&p.hidden_weights[l]);
        }
        unreachable!("loop returns at the first hidden layer")
    }

    /// Generative direction: solves for `x` given `u`, one coordinate per
    /// pass in autoregressive order.
    pub fn inverse_batch(&self, u: ArrayView2<f64>, theta: ArrayView2<f64>) -> Array2<f64> {
        let mut x = Array2::zeros(u.raw_dim());
        for _ in 0..self.data_dim() {
            let (_, mu, alpha) = self.conditioner(x.view(), theta);
            let mut next = u.to_owned();
            next.zip_mut_with(&alpha, |v, &a| *v *= a.exp());
            next += &mu;
            x = next;
        }
        x
    }
}

fn row_view(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("contiguous row")
}

/// Density-direction pass of a single layer on one point.
pub fn layer_forward(x: &[f64], theta: &[f64], layer: &MadeLayer) -> Result<(Vec<f64>, f64)> {
    ensure_dim("layer input", layer.data_dim(), x.len())?;
    ensure_dim("layer conditioner", layer.cond_dim(), theta.len())?;
    ensure_finite("layer input", x)?;
    ensure_finite("layer conditioner", theta)?;
    let (u, logdet) = layer.forward_batch(row_view(x), row_view(theta));
    let u = u.into_raw_vec_and_offset().0;
    if !u.iter().all(|v| v.is_finite()) || !logdet[0].is_finite() {
        return Err(Error::NonFinite("layer output".into()));
    }
    Ok((u, logdet[0]))
}
