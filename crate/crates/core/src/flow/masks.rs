//! MADE connectivity masks.
//!
//! Input coordinate `i` of a layer gets degree `position of i in the
//! ordering + 1`. Hidden units cycle through degrees `1..=D-1` and may see
//! previous units of degree `<=` their own; output heads for coordinate `i`
//! may only see hidden units of degree strictly below the degree of `i`.
//! Conditioning inputs are fully connected to the first hidden layer.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskSet {
    pub data_dim: usize,
    pub cond_dim: usize,
    /// Permutation of `0..data_dim`; `ordering[k]` is the coordinate that
    /// comes `k`-th in the autoregressive order.
    pub ordering: Vec<usize>,
    pub input_degrees: Vec<usize>,
    pub hidden_degrees: Vec<Vec<usize>>,
    /// `hidden_masks[l]` has shape `(hidden_sizes[l], fan_in)` where fan-in is
    /// the data dimension for `l == 0` and the previous hidden size otherwise.
    #[serde(skip)]
    pub hidden_masks: Vec<Array2<f64>>,
    /// Shape `(data_dim, last hidden size)`; shared by the mean and
    /// log-scale heads.
    #[serde(skip)]
    pub output_mask: Array2<f64>,
}

pub fn natural_ordering(data_dim: usize) -> Vec<usize> {
    (0..data_dim).collect()
}

pub fn reversed_ordering(data_dim: usize) -> Vec<usize> {
    (0..data_dim).rev().collect()
}

fn is_permutation(ordering: &[usize]) -> bool {
    let mut seen = vec![false; ordering.len()];
    for &i in ordering {
        if i >= seen.len() || seen[i] {
            return false;
        }
        seen[i] = true;
    }
    true
}

pub fn build_masks(
    data_dim: usize,
    hidden_sizes: &[usize],
    cond_dim: usize,
    ordering: &[usize],
) -> Result<MaskSet> {
    if data_dim == 0 {
        return Err(Error::InvalidArgument("data_dim must be at least 1".into()));
    }
    if hidden_sizes.is_empty() || hidden_sizes.contains(&0) {
        return Err(Error::InvalidArgument(
            "need at least one hidden layer and every hidden size >= 1".into(),
        ));
    }
    if ordering.len() != data_dim || !is_permutation(ordering) {
        return Err(Error::InvalidArgument(format!(
            "ordering {ordering:?} is not a permutation of 0..{data_dim}"
        )));
    }

    let mut input_degrees = vec![0; data_dim];
    for (position, &coord) in ordering.iter().enumerate() {
        input_degrees[coord] = position + 1;
    }

    // For D = 1 every hidden unit gets degree 0 and sees only the conditioner.
    let cycle = (data_dim - 1).max(1);
    let offset = (data_dim - 1).min(1);
    let hidden_degrees: Vec<Vec<usize>> = hidden_sizes
        .iter()
        .map(|&h| (0..h).map(|k| k % cycle + offset).collect())
        .collect();

    let mut hidden_masks = Vec::with_capacity(hidden_sizes.len());
    let mut prev = &input_degrees;
    for degrees in &hidden_degrees {
        let mask = Array2::from_shape_fn((degrees.len(), prev.len()), |(j, k)| {
            if prev[k] <= degrees[j] {
                1.0
            } else {
                0.0
            }
        });
        hidden_masks.push(mask);
        prev = degrees;
    }
    let output_mask = Array2::from_shape_fn((data_dim, prev.len()), |(i, k)| {
        if prev[k] < input_degrees[i] {
            1.0
        } else {
            0.0
        }
    });

    Ok(MaskSet {
        data_dim,
        cond_dim,
        ordering: ordering.to_vec(),
        input_degrees,
        hidden_degrees,
        hidden_masks,
        output_mask,
    })
}

impl MaskSet {
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.hidden_degrees.iter().map(Vec::len).collect()
    }

    /// Rebuilds the derived mask matrices (they are not serialized).
    pub(crate) fn rebuild(&self) -> Result<MaskSet> {
        build_masks(
            self.data_dim,
            &self.hidden_sizes(),
            self.cond_dim,
            &self.ordering,
        )
    }
}
