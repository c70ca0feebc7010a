//! Multivariate Gaussian fitted to a batch of vectors.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{ensure_dim, Error, Result};
use crate::rng::Rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
/// Relative ridge (times the mean variance) added when the sample
/// covariance is not positive definite.
pub const COVARIANCE_JITTER: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GaussianFit {
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl GaussianFit {
    /// Sample mean and unbiased sample covariance. Needs `n >= d + 2`
    /// points; a singular covariance gets one jitter attempt.
    pub fn fit(samples: &[Vec<f64>]) -> Result<Self> {
        let d = samples.first().map_or(0, Vec::len);
        if d == 0 {
            return Err(Error::InvalidArgument("cannot fit a Gaussian to an empty batch".into()));
        }
        if samples.len() < d + 2 {
            return Err(Error::InvalidArgument(format!(
                "Gaussian fit in dimension {d} needs at least {} points, got {}",
                d + 2,
                samples.len()
            )));
        }
        let n = samples.len() as f64;
        let mut mean = DVector::zeros(d);
        for s in samples {
            ensure_dim("Gaussian fit sample", d, s.len())?;
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Gaussian fit sample".into()));
            }
            mean += DVector::from_column_slice(s);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(d, d);
        for s in samples {
            let c = DVector::from_column_slice(s) - &mean;
            cov.ger(1.0, &c, &c, 1.0);
        }
        cov /= n - 1.0;
        let chol = match Cholesky::new(cov.clone()) {
            Some(c) => c,
            None => {
                let ridge = COVARIANCE_JITTER * cov.trace() / d as f64;
                if !(ridge > 0.0) {
                    return Err(Error::SingularCovariance("all points in the batch coincide".into()));
                }
                for i in 0..d {
                    cov[(i, i)] += ridge;
                }
                Cholesky::new(cov).ok_or_else(|| {
                    Error::SingularCovariance("covariance not positive definite after jitter".into())
                })?
            }
        };
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance("covariance determinant underflows".into()));
        }
        Ok(Self { mean, chol, log_det })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        ensure_dim("Gaussian evaluation point", self.dim(), x.len())?;
        let diff = DVector::from_column_slice(x) - &self.mean;
        let z = self
            .chol
            .l()
            .solve_lower_triangular(&diff)
            .ok_or_else(|| Error::SingularCovariance("Cholesky factor is singular".into()))?;
        Ok(-0.5 * (z.norm_squared() + self.log_det + self.dim() as f64 * LN_2PI))
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (self.chol.l() * z + &self.mean).as_slice().to_vec()
    }
}
