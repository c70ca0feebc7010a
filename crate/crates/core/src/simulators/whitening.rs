//! Affine whitening of summary statistics fitted on a pilot run.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Largest condition number accepted for the whitening map.
pub const MAX_CONDITION: f64 = 1e6;
/// Relative ridge added to a pilot covariance that is singular up to
/// rounding; anything still ill-conditioned afterwards is rejected.
pub const PILOT_JITTER: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteningMode {
    /// Shift by the mean and multiply by the inverse Cholesky factor.
    Full,
    /// Shift by the mean and divide by the per-feature standard deviation.
    Diagonal,
}

/// `y = map * (x - shift)`, with `map` stored row by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Whitening {
    pub mode: WhiteningMode,
    pub shift: Vec<f64>,
    pub map: Vec<Vec<f64>>,
}

impl Whitening {
    pub fn identity(dim: usize) -> Self {
        let map = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            mode: WhiteningMode::Diagonal,
            shift: vec![0.0; dim],
            map,
        }
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("whitening input", self.dim(), x.len())?;
        let centered: Vec<f64> = x.iter().zip(&self.shift).map(|(a, b)| a - b).collect();
        Ok(self
            .map
            .iter()
            .map(|row| row.iter().zip(&centered).map(|(m, c)| m * c).sum())
            .collect())
    }

    /// Maps whitened features back to the raw scale.
    pub fn unapply(&self, y: &[f64]) -> Result<Vec<f64>> {
        ensure_dim("whitening input", self.dim(), y.len())?;
        let d = self.dim();
        let map = DMatrix::from_fn(d, d, |i, j| self.map[i][j]);
        let raw = map
            .lu()
            .solve(&DVector::from_column_slice(y))
            .ok_or_else(|| Error::SingularCovariance("whitening map is not invertible".into()))?;
        Ok(raw.iter().zip(&self.shift).map(|(r, s)| r + s).collect())
    }

    fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.map.len() != d || self.map.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidArgument("whitening map must be square".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Whitening = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }
}

fn covariance(sims: &[Vec<f64>], mean: &[f64]) -> DMatrix<f64> {
    let d = mean.len();
    let mut cov = DMatrix::zeros(d, d);
    for s in sims {
        let c = DVector::from_iterator(d, s.iter().zip(mean).map(|(a, m)| a - m));
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov / (sims.len() - 1) as f64
}

fn spectral_condition(cov: &DMatrix<f64>) -> f64 {
    let eig = cov.clone().symmetric_eigen().eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Fits a whitening transform on pilot simulations. Full mode makes the
/// pilot mean zero and its (unbiased) covariance the identity.
pub fn pilot_whitening(sims: &[Vec<f64>], mode: WhiteningMode) -> Result<Whitening> {
    let d = sims.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::InvalidArgument("pilot set is empty".into()));
    }
    if sims.len() < d + 2 {
        return Err(Error::InvalidArgument(format!(
            "pilot needs at least {} simulations, got {}",
            d + 2,
            sims.len()
        )));
    }
    for s in sims {
        ensure_dim("pilot simulation", d, s.len())?;
        crate::error::ensure_finite("pilot simulation", s)?;
    }
    let n = sims.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| sims.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let mut cov = covariance(sims, &mean);
    if mode == WhiteningMode::Diagonal {
        cov = DMatrix::from_diagonal(&cov.diagonal());
    }
    // cond(map) = sqrt(cond(cov))
    let limit = MAX_CONDITION * MAX_CONDITION;
    if spectral_condition(&cov) > limit {
        let ridge = PILOT_JITTER * cov.trace() / d as f64;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        if spectral_condition(&cov) > limit {
            return Err(Error::SingularCovariance(
                "pilot covariance is rank deficient even after jitter".into(),
            ));
        }
    }
    let map = match mode {
        WhiteningMode::Full => {
            let chol = cov.cholesky().ok_or_else(|| {
                Error::SingularCovariance("pilot covariance is not positive definite".into())
            })?;
            chol.l()
                .solve_lower_triangular(&DMatrix::identity(d, d))
                .ok_or_else(|| Error::SingularCovariance("Cholesky factor is singular".into()))?
        }
        WhiteningMode::Diagonal => DMatrix::from_diagonal(&cov.diagonal().map(|v| 1.0 / v.sqrt())),
    };
    Ok(Whitening {
        mode,
        shift: mean,
        map: (0..d).map(|i| (0..d).map(|j| map[(i, j)]).collect()).collect(),
    })
}
