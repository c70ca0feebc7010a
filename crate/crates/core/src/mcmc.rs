//! Axis-aligned slice sampling with stepping-out and shrinkage.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};

/// Shrinkage steps allowed in one axis update before giving up.
pub const MAX_SHRINK_STEPS: usize = 1000;
/// Upper bound on bracket expansions per axis update (split randomly
/// between the two ends, so detailed balance is kept).
pub const MAX_STEP_OUT: usize = 1000;

/// Persistent state of one chain: position, cached log target at that
/// position, per-axis bracket widths and the RNG stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    point: Vec<f64>,
    log_density: f64,
    widths: Vec<f64>,
    rng: Rng,
    sweeps: u64,
}

impl ChainState {
    pub fn new(point: Vec<f64>, widths: Vec<f64>, seed: u64) -> Result<Self> {
        Self::with_rng(point, widths, seeded(seed))
    }

    pub fn with_rng(point: Vec<f64>, widths: Vec<f64>, rng: Rng) -> Result<Self> {
        if point.is_empty() {
            return Err(Error::InvalidArgument("chain point must be non-empty".into()));
        }
        crate::error::ensure_dim("bracket widths", point.len(), widths.len())?;
        crate::error::ensure_finite("chain point", &point)?;
        if let Some(w) = widths.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "bracket widths must be positive and finite, got {w}"
            )));
        }
        Ok(Self {
            point,
            log_density: f64::NAN,
            widths,
            rng,
            sweeps: 0,
        })
    }

    pub fn point(&self) -> &[f64] {
        &self.point
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    /// Completed full sweeps over all axes since creation.
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// Log target cached at the current point (NaN before the first
    /// evaluation).
    pub fn log_density(&self) -> f64 {
        self.log_density
    }

    pub fn rng_mut(&mut self) -> &mut Rng {
        &mut self.rng
    }

    pub fn set_widths(&mut self, widths: Vec<f64>) -> Result<()> {
        let replaced = Self::with_rng(self.point.clone(), widths, self.rng.clone())?;
        self.widths = replaced.widths;
        Ok(())
    }

    /// Evaluates the target at the current point and caches it. Needed
    /// whenever the target changes, e.g. between rounds.
    pub fn retarget<F>(&mut self, target: &mut F) -> Result<()>
    where
        F: FnMut(&[f64]) -> Result<f64>,
    {
        let value = eval(target, &self.point)?;
        if value == f64::NEG_INFINITY {
            return Err(Error::OutOfSupport(self.point.clone()));
        }
        self.log_density = value;
        Ok(())
    }
}

fn eval<F>(target: &mut F, point: &[f64]) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let value = target(point)?;
    if value.is_nan() {
        return Ok(f64::NEG_INFINITY);
    }
    if value == f64::INFINITY {
        return Err(Error::NonFinite("log target returned +inf".into()));
    }
    Ok(value)
}

/// One slice update along `axis`. The cached log target must be current
/// (see [`ChainState::retarget`]).
pub fn slice_update_axis<F>(state: &mut ChainState, axis: usize, target: &mut F) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if axis >= state.dim() {
        return Err(Error::InvalidArgument(format!(
            "axis {axis} out of range for a {}-dimensional chain",
            state.dim()
        )));
    }
    if !state.log_density.is_finite() {
        state.retarget(target)?;
    }
    let x0 = state.point[axis];
    let width = state.widths[axis];
    let level = state.log_density + (1.0 - state.rng.random::<f64>()).ln();
    let mut probe = state.point.clone();
    let mut at = |value: f64, target: &mut F| -> Result<f64> {
        probe[axis] = value;
        eval(target, &probe)
    };

    let mut lower = x0 - width * state.rng.random::<f64>();
    let mut upper = lower + width;
    let mut left_steps = (MAX_STEP_OUT as f64 * state.rng.random::<f64>()) as usize;
    let mut right_steps = MAX_STEP_OUT - 1 - left_steps;
    while left_steps > 0 && at(lower, target)? > level {
        lower -= width;
        left_steps -= 1;
    }
    while right_steps > 0 && at(upper, target)? > level {
        upper += width;
        right_steps -= 1;
    }

    for _ in 0..MAX_SHRINK_STEPS {
        let candidate = lower + (upper - lower) * state.rng.random::<f64>();
        // the bracket has shrunk onto the current point, which lies in the
        // slice by construction
        if candidate == x0 {
            return Ok(());
        }
        let value = at(candidate, target)?;
        if value > level {
            state.point[axis] = candidate;
            state.log_density = value;
            return Ok(());
        }
        if candidate < x0 {
            lower = candidate;
        } else {
            upper = candidate;
        }
    }
    Err(Error::SliceSampler {
        axis,
        reason: format!("no acceptable point after {MAX_SHRINK_STEPS} shrinkage steps"),
    })
}

/// One full sweep over all axes in order.
pub fn sweep<F>(state: &mut ChainState, target: &mut F) -> Result<()>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    for axis in 0..state.dim() {
        slice_update_axis(state, axis, target)?;
    }
    state.sweeps += 1;
    Ok(())
}

/// Runs `burn_in` sweeps, then records the point after every `thin`-th
/// sweep until `n_samples` points are collected. The target is
/// re-evaluated at the starting point, so a state carried over from an
/// earlier target can be passed straight in.
pub fn run_chain<F>(
    state: &mut ChainState,
    target: &mut F,
    n_samples: usize,
    burn_in: usize,
    thin: usize,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be >= 1".into()));
    }
    if thin == 0 {
        return Err(Error::InvalidArgument("thin must be >= 1".into()));
    }
    state.retarget(target)?;
    for _ in 0..burn_in {
        sweep(state, target)?;
    }
    let mut samples = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for _ in 0..thin {
            sweep(state, target)?;
        }
        samples.push(state.point.clone());
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_normal(p: &[f64]) -> Result<f64> {
        Ok(-0.5 * p.iter().map(|v| v * v).sum::<f64>())
    }

    fn unit_box(p: &[f64]) -> Result<f64> {
        Ok(if p.iter().all(|v| (0.0..=1.0).contains(v)) {
            0.0
        } else {
            f64::NEG_INFINITY
        })
    }

    #[test]
    fn support_is_preserved() {
        let mut state = ChainState::new(vec![0.5], vec![3.0], 1).unwrap();
        let mut target = unit_box;
        state.retarget(&mut target).unwrap();
        for _ in 0..2000 {
            slice_update_axis(&mut state, 0, &mut target).unwrap();
            assert!((0.0..=1.0).contains(&state.point()[0]));
        }
    }

    #[test]
    fn standard_normal_moments() {
        let mut state = ChainState::new(vec![0.0], vec![1.0], 2).unwrap();
        let samples = run_chain(&mut state, &mut std_normal, 100_000, 100, 1).unwrap();
        let n = samples.len() as f64;
        let mean = samples.iter().map(|s| s[0]).sum::<f64>() / n;
        let var = samples.iter().map(|s| (s[0] - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn shrinkage_terminates_on_narrow_support() {
        // only a tiny interval around the start has positive density
        let mut target = |p: &[f64]| -> Result<f64> {
            Ok(if (p[0] - 0.3).abs() < 1e-9 { 0.0 } else { f64::NEG_INFINITY })
        };
        let mut state = ChainState::new(vec![0.3], vec![100.0], 3).unwrap();
        state.retarget(&mut target).unwrap();
        for _ in 0..50 {
            slice_update_axis(&mut state, 0, &mut target).unwrap();
            assert!((state.point()[0] - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_point_support_collapses_onto_current_point() {
        let mut target = |p: &[f64]| -> Result<f64> {
            Ok(if p[0] == 0.25 { 0.0 } else { f64::NEG_INFINITY })
        };
        let mut state = ChainState::new(vec![0.25], vec![1.0], 4).unwrap();
        state.retarget(&mut target).unwrap();
        slice_update_axis(&mut state, 0, &mut target).unwrap();
        assert_eq!(state.point()[0], 0.25);
    }

    #[test]
    fn sweep_accounting() {
        let mut state = ChainState::new(vec![0.0, 0.0], vec![1.0, 1.0], 5).unwrap();
        let samples = run_chain(&mut state, &mut std_normal, 1000, 200, 1).unwrap();
        assert_eq!(samples.len(), 1000);
        assert_eq!(state.sweeps(), 1200);
        let samples = run_chain(&mut state, &mut std_normal, 10, 0, 7).unwrap();
        assert_eq!(samples.len(), 10);
        assert_eq!(state.sweeps(), 1270);
    }

    #[test]
    fn deterministic_given_seed() {
        let run = || {
            let mut state = ChainState::new(vec![0.1, -0.1], vec![2.0, 2.0], 11).unwrap();
            run_chain(&mut state, &mut std_normal, 200, 10, 2).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ChainState::new(vec![0.0], vec![0.0], 0).is_err());
        assert!(ChainState::new(vec![0.0], vec![1.0, 1.0], 0).is_err());
        assert!(ChainState::new(vec![f64::NAN], vec![1.0], 0).is_err());
        let mut state = ChainState::new(vec![2.0], vec![1.0], 0).unwrap();
        assert!(matches!(
            run_chain(&mut state, &mut unit_box, 1, 0, 1),
            Err(Error::OutOfSupport(_))
        ));
        let mut state = ChainState::new(vec![0.5], vec![1.0], 0).unwrap();
        assert!(run_chain(&mut state, &mut unit_box, 0, 0, 1).is_err());
        assert!(run_chain(&mut state, &mut unit_box, 1, 0, 0).is_err());
    }

    #[test]
    fn pathological_target_aborts() {
        // the level is drawn against a value that the target never
        // reproduces, so every candidate is rejected
        let mut calls = 0u32;
        let mut target = |_: &[f64]| -> Result<f64> {
            calls += 1;
            Ok(if calls == 1 { 0.0 } else { -1e300 })
        };
        let mut state = ChainState::new(vec![0.0], vec![1e300], 6).unwrap();
        state.retarget(&mut target).unwrap();
        let err = slice_update_axis(&mut state, 0, &mut target).unwrap_err();
        assert!(matches!(err, Error::SliceSampler { axis: 0, .. }));
    }
}
