//! Batch normalization used as an invertible layer.
//!
//! `y = (x - m) / sqrt(v + eps) * exp(log_gamma) + beta`, with `(m, v)`
//! the minibatch moments while training and the running moments otherwise.
//! The log-determinant is `sum_j log_gamma_j - 0.5 * log(v_j + eps)`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub log_gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl BnParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            log_gamma: Array1::zeros(dim),
            beta: Array1::zeros(dim),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.log_gamma.as_slice().expect("standard layout"),
            self.beta.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.log_gamma.as_slice_mut().expect("standard layout"),
            self.beta.as_slice_mut().expect("standard layout"),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub params: BnParams,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

pub(crate) struct BnCache {
    x_hat: Array2<f64>,
    std: Array1<f64>,
    pub(crate) mean: Array1<f64>,
    pub(crate) var: Array1<f64>,
}

impl BatchNorm {
    /// Fresh layer whose evaluation-mode map is exactly the identity: the
    /// running variance starts at `1 - eps` so that `sqrt(v + eps) == 1`.
    pub fn new(dim: usize) -> Self {
        Self {
            params: BnParams::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::from_elem(dim, 1.0 - BN_EPS),
        }
    }

    fn apply(&self, x: ArrayView2<f64>, mean: &Array1<f64>, var: &Array1<f64>) -> (Array2<f64>, f64) {
        let p = &self.params;
        let scale: Array1<f64> = var
            .iter()
            .zip(&p.log_gamma)
            .map(|(&v, &g)| g.exp() / (v + BN_EPS).sqrt())
            .collect();
        let mut y = &x - &mean.view().insert_axis(Axis(0));
        y *= &scale;
        y += &p.beta;
        let logdet = var
            .iter()
            .zip(&p.log_gamma)
            .map(|(&v, &g)| g - 0.5 * (v + BN_EPS).ln())
            .sum();
        (y, logdet)
    }

    /// Evaluation mode; the log-determinant is the same for every row.
    pub fn forward_eval(&self, x: ArrayView2<f64>) -> (Array2<f64>, f64) {
        self.apply(x, &self.running_mean, &self.running_var)
    }

    /// Training mode with minibatch moments (biased variance).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> (Array2<f64>, f64) {
        let (mean, var) = moments(x);
        self.apply(x, &mean, &var)
    }

    pub(crate) fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, f64, BnCache) {
        let (mean, var) = moments(x);
        let (y, logdet) = self.apply(x, &mean, &var);
        let std = var.mapv(|v| (v + BN_EPS).sqrt());
        let mut x_hat = &x - &mean.view().insert_axis(Axis(0));
        x_hat /= &std;
        (
            y,
            logdet,
            BnCache {
                x_hat,
                std,
                mean,
                var,
            },
        )
    }

    /// `g_logdet_total` is the summed weight of the per-row log-determinant in
    /// the objective.
    pub(crate) fn backward(
        &self,
        cache: &BnCache,
        g_y: &Array2<f64>,
        g_logdet_total: f64,
        grads: &mut BnParams,
    ) -> Array2<f64> {
        let n = g_y.nrows() as f64;
        let gamma = self.params.log_gamma.mapv(f64::exp);
        grads.beta += &g_y.sum_axis(Axis(0));
        let mut gg = (g_y * &cache.x_hat).sum_axis(Axis(0));
        gg *= &gamma;
        gg += g_logdet_total;
        grads.log_gamma += &gg;

        let g_hat = g_y * &gamma;
        let mean_g = g_hat.mean_axis(Axis(0)).expect("non-empty batch");
        let mean_gx = (&g_hat * &cache.x_hat)
            .mean_axis(Axis(0))
            .expect("non-empty batch");
        let mut g_x = g_hat - &mean_g;
        g_x -= &(&cache.x_hat * &mean_gx);
        // the -0.5 log(v + eps) term pulls on the variance
        g_x -= &(&cache.x_hat * (g_logdet_total / n));
        g_x /= &cache.std;
        g_x
    }

    pub(crate) fn backward_eval(&self, g_y: &Array2<f64>, grads: &mut BnParams, g_logdet_total: f64, x: ArrayView2<f64>) -> Array2<f64> {
        let gamma = self.params.log_gamma.mapv(f64::exp);
        let std = self.running_var.mapv(|v| (v + BN_EPS).sqrt());
        let mut x_hat = &x - &self.running_mean.view().insert_axis(Axis(0));
        x_hat /= &std;
        grads.beta += &g_y.sum_axis(Axis(0));
        let mut gg = (g_y * &x_hat).sum_axis(Axis(0));
        gg *= &gamma;
        gg += g_logdet_total;
        grads.log_gamma += &gg;
        let scale = &gamma / &std;
        g_y * &scale
    }

    pub fn inverse_eval(&self, y: ArrayView2<f64>) -> Array2<f64> {
        let p = &self.params;
        let scale: Array1<f64> = self
            .running_var
            .iter()
            .zip(&p.log_gamma)
            .map(|(&v, &g)| (v + BN_EPS).sqrt() * (-g).exp())
            .collect();
        let mut x = &y - &p.beta.view().insert_axis(Axis(0));
        x *= &scale;
        x += &self.running_mean;
        x
    }

    pub fn update_running(&mut self, mean: &Array1<f64>, var: &Array1<f64>) {
        self.running_mean
            .zip_mut_with(mean, |r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
        self.running_var
            .zip_mut_with(var, |r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v);
    }

    /// Variances are floored at `f64::MIN_POSITIVE` to keep them strictly positive.
    pub fn set_running(&mut self, mean: Array1<f64>, var: Array1<f64>) {
        self.running_mean = mean;
        self.running_var = var.mapv(|v| v.max(f64::MIN_POSITIVE));
    }
}

/// Column means and biased variances.
pub(crate) fn moments(x: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("non-empty batch");
    let centered = &x - &mean.view().insert_axis(Axis(0));
    let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("non-empty batch");
    (mean, var)
}
