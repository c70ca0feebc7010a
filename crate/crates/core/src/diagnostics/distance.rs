//! Distances between simulated and observed data.

use crate::error::{ensure_dim, Error, Result};
use crate::store::SimulationStore;

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Median of a non-empty list (mean of the two middle values for even
/// length).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidArgument("median of an empty list".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// Median Euclidean distance between the data simulated in `round` and
/// `observed`.
pub fn median_distance(store: &SimulationStore, observed: &[f64], round: usize) -> Result<f64> {
    ensure_dim("observed data", store.data_dim(), observed.len())?;
    let d: Vec<f64> = store.round(round).map(|r| euclidean(&r.x, observed)).collect();
    if d.is_empty() {
        return Err(Error::InvalidArgument(format!("round {round} has no simulations")));
    }
    median(&d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_definition() {
        let store = SimulationStore::from_pairs(
            1,
            1,
            [(vec![0.0], vec![0.0]), (vec![0.0], vec![3.0]), (vec![0.0], vec![-10.0])],
        )
        .unwrap();
        assert_eq!(median_distance(&store, &[0.0], 1).unwrap(), 3.0);
        assert!(median_distance(&store, &[0.0], 2).is_err());
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]).unwrap(), 2.5);
    }

    #[test]
    fn exact_match_is_zero() {
        let store = SimulationStore::from_pairs(1, 2, (0..5).map(|i| (vec![i as f64], vec![1.0, 2.0]))).unwrap();
        assert_eq!(median_distance(&store, &[1.0, 2.0], 1).unwrap(), 0.0);
    }
}
