//! Parameter priors: uniform boxes (optionally with bounds shifted by an
//! earlier coordinate) and isotropic Gaussians truncated to a box.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::rng::Rng;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    /// `theta_i ~ U(lower_i + s_i, upper_i + s_i)` where `s_i` is
    /// `theta_j` if `relative_to[i] == Some(j)` and zero otherwise.
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default)]
        relative_to: Vec<Option<usize>>,
    },
    /// `N(theta | center, scale^2 I)` restricted to `[lower, upper]`.
    TruncatedGaussianBox {
        center: Vec<f64>,
        scale: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

fn check_bounds(lower: &[f64], upper: &[f64]) -> Result<()> {
    ensure_dim("prior upper bounds", lower.len(), upper.len())?;
    if lower.is_empty() {
        return Err(Error::InvalidArgument("prior must have at least one axis".into()));
    }
    for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
        if !(l.is_finite() && u.is_finite() && l < u) {
            return Err(Error::InvalidArgument(format!(
                "prior axis {i}: bounds must be finite with lower < upper, got [{l}, {u}]"
            )));
        }
    }
    Ok(())
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z - LN_SQRT_2PI).exp()
}

impl Prior {
    pub fn uniform_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let relative_to = vec![None; lower.len()];
        Self::uniform_box_relative(lower, upper, relative_to)
    }

    pub fn uniform_box_relative(
        lower: Vec<f64>,
        upper: Vec<f64>,
        relative_to: Vec<Option<usize>>,
    ) -> Result<Self> {
        let prior = Prior::UniformBox {
            lower,
            upper,
            relative_to,
        };
        prior.validate()?;
        Ok(prior)
    }

    pub fn truncated_gaussian_box(
        center: Vec<f64>,
        scale: f64,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let prior = Prior::TruncatedGaussianBox {
            center,
            scale,
            lower,
            upper,
        };
        prior.validate()?;
        Ok(prior)
    }

    /// Checks the invariants; needed after deserializing.
    pub fn validate(&self) -> Result<()> {
        match self {
            Prior::UniformBox {
                lower,
                upper,
                relative_to,
            } => {
                check_bounds(lower, upper)?;
                ensure_dim("prior relative_to", lower.len(), relative_to.len())?;
                for (i, r) in relative_to.iter().enumerate() {
                    if matches!(r, Some(j) if *j >= i) {
                        return Err(Error::InvalidArgument(format!(
                            "prior axis {i} may only be relative to an earlier axis"
                        )));
                    }
                }
            }
            Prior::TruncatedGaussianBox {
                center,
                scale,
                lower,
                upper,
            } => {
                check_bounds(lower, upper)?;
                ensure_dim("prior center", lower.len(), center.len())?;
                if !(scale.is_finite() && *scale > 0.0) {
                    return Err(Error::InvalidArgument("prior scale must be positive".into()));
                }
                for i in 0..lower.len() {
                    // rejection sampling needs a non-negligible mass in the box
                    if self.axis_mass(i) < 1e-3 {
                        return Err(Error::InvalidArgument(format!(
                            "truncated Gaussian prior has almost no mass on axis {i}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match self {
            Prior::UniformBox { lower, .. } | Prior::TruncatedGaussianBox { lower, .. } => lower.len(),
        }
    }

    fn axis_mass(&self, i: usize) -> f64 {
        match self {
            Prior::TruncatedGaussianBox {
                center,
                scale,
                lower,
                upper,
            } => {
                std_normal_cdf((upper[i] - center[i]) / scale)
                    - std_normal_cdf((lower[i] - center[i]) / scale)
            }
            Prior::UniformBox { .. } => 1.0,
        }
    }

    /// Support of axis `i` given the earlier coordinates of `theta`.
    pub fn axis_bounds(&self, theta: &[f64], i: usize) -> (f64, f64) {
        match self {
            Prior::UniformBox {
                lower,
                upper,
                relative_to,
            } => {
                let shift = relative_to[i].map_or(0.0, |j| theta[j]);
                (lower[i] + shift, upper[i] + shift)
            }
            Prior::TruncatedGaussianBox { lower, upper, .. } => (lower[i], upper[i]),
        }
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && (0..self.dim()).all(|i| {
                let (lo, hi) = self.axis_bounds(theta, i);
                (lo..=hi).contains(&theta[i])
            })
    }

    /// Normalized log density; `-inf` outside the support.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if !self.contains(theta) {
            return f64::NEG_INFINITY;
        }
        match self {
            Prior::UniformBox { lower, upper, .. } => {
                -lower.iter().zip(upper).map(|(l, u)| (u - l).ln()).sum::<f64>()
            }
            Prior::TruncatedGaussianBox { center, scale, .. } => (0..self.dim())
                .map(|i| {
                    let z = (theta[i] - center[i]) / scale;
                    -0.5 * z * z - LN_SQRT_2PI - scale.ln() - self.axis_mass(i).ln()
                })
                .sum(),
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut theta = vec![0.0; self.dim()];
        for i in 0..self.dim() {
            let (lo, hi) = self.axis_bounds(&theta, i);
            theta[i] = match self {
                Prior::UniformBox { .. } => lo + (hi - lo) * rng.random::<f64>(),
                Prior::TruncatedGaussianBox { center, scale, .. } => loop {
                    let v = center[i] + scale * rng.sample::<f64, _>(StandardNormal);
                    if (lo..=hi).contains(&v) {
                        break v;
                    }
                },
            };
        }
        theta
    }

    /// Per-axis width of the box, used as the initial slice-sampling bracket.
    pub fn axis_widths(&self) -> Vec<f64> {
        match self {
            Prior::UniformBox { lower, upper, .. } | Prior::TruncatedGaussianBox { lower, upper, .. } => {
                lower.iter().zip(upper).map(|(l, u)| u - l).collect()
            }
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.dim()];
        for i in 0..self.dim() {
            mean[i] = match self {
                Prior::UniformBox {
                    lower,
                    upper,
                    relative_to,
                } => 0.5 * (lower[i] + upper[i]) + relative_to[i].map_or(0.0, |j| mean[j]),
                Prior::TruncatedGaussianBox {
                    center,
                    scale,
                    lower,
                    upper,
                } => {
                    let a = (lower[i] - center[i]) / scale;
                    let b = (upper[i] - center[i]) / scale;
                    center[i] + scale * (std_normal_pdf(a) - std_normal_pdf(b)) / self.axis_mass(i)
                }
            };
        }
        mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn uniform_box_density_and_moments() {
        let prior = Prior::uniform_box(vec![-3.0, 0.0], vec![3.0, 2.0]).unwrap();
        assert!((prior.log_density(&[0.0, 1.0]) + (12.0f64).ln()).abs() < 1e-15);
        assert_eq!(prior.log_density(&[3.5, 1.0]), f64::NEG_INFINITY);
        let mut rng = seeded(1);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| prior.sample(&mut rng)).collect();
        for (axis, (l, u)) in [(-3.0f64, 3.0f64), (0.0, 2.0)].into_iter().enumerate() {
            let mean = draws.iter().map(|d| d[axis]).sum::<f64>() / n as f64;
            let var = (u - l).powi(2) / 12.0;
            assert!((mean - 0.5 * (l + u)).abs() < 3.0 * (var / n as f64).sqrt());
            let m2 = draws.iter().map(|d| (d[axis] - 0.5 * (l + u)).powi(2)).sum::<f64>() / n as f64;
            // var of (x - mu)^2 for a uniform is (u-l)^4/180
            assert!((m2 - var).abs() < 3.0 * ((u - l).powi(4) / 180.0 / n as f64).sqrt());
        }
    }

    #[test]
    fn relative_bounds_follow_earlier_axis() {
        let prior = Prior::uniform_box_relative(
            vec![0.0, 0.0],
            vec![10.0, 10.0],
            vec![None, Some(0)],
        )
        .unwrap();
        assert!(prior.contains(&[4.0, 13.0]));
        assert!(!prior.contains(&[4.0, 3.0]));
        let mut rng = seeded(2);
        for _ in 0..1000 {
            let t = prior.sample(&mut rng);
            assert!(t[1] >= t[0] && t[1] <= t[0] + 10.0);
        }
        assert_eq!(prior.mean(), vec![5.0, 10.0]);
        assert!(Prior::uniform_box_relative(vec![0.0], vec![1.0], vec![Some(0)]).is_err());
    }

    #[test]
    fn truncated_gaussian_normalizes() {
        let prior = Prior::truncated_gaussian_box(vec![0.3], 0.5, vec![-1.0], vec![0.5]).unwrap();
        let n = 200_000;
        let h = 1.5 / n as f64;
        let total: f64 = (0..n)
            .map(|k| prior.log_density(&[-1.0 + (k as f64 + 0.5) * h]).exp() * h)
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
        let mut rng = seeded(3);
        let draws: Vec<f64> = (0..50_000).map(|_| prior.sample(&mut rng)[0]).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - prior.mean()[0]).abs() < 0.01);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(Prior::uniform_box(vec![1.0], vec![1.0]).is_err());
        assert!(Prior::uniform_box(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(Prior::truncated_gaussian_box(vec![100.0], 0.5, vec![0.0], vec![1.0]).is_err());
    }
}
