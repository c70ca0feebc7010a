//! The growing set of simulated `(theta, x)` pairs.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationRecord {
    pub round: usize,
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationStore {
    param_dim: usize,
    data_dim: usize,
    records: Vec<SimulationRecord>,
}

impl SimulationStore {
    pub fn new(param_dim: usize, data_dim: usize) -> Self {
        Self {
            param_dim,
            data_dim,
            records: Vec::new(),
        }
    }

    pub fn from_pairs(param_dim: usize, data_dim: usize, pairs: impl IntoIterator<Item = (Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let mut store = Self::new(param_dim, data_dim);
        for (theta, x) in pairs {
            store.push(1, theta, x)?;
        }
        Ok(store)
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn push(&mut self, round: usize, theta: Vec<f64>, x: Vec<f64>) -> Result<()> {
        ensure_dim("record theta", self.param_dim, theta.len())?;
        ensure_dim("record x", self.data_dim, x.len())?;
        if let Some(last) = self.records.last() {
            if round < last.round {
                return Err(Error::InvalidArgument(format!(
                    "round {round} added after round {}",
                    last.round
                )));
            }
        }
        self.records.push(SimulationRecord { round, theta, x });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SimulationRecord] {
        &self.records
    }

    pub fn round(&self, round: usize) -> impl Iterator<Item = &SimulationRecord> {
        self.records.iter().filter(move |r| r.round == round)
    }

    pub fn rounds(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.records.iter().map(|r| r.round).collect();
        out.dedup();
        out
    }

    pub fn thetas(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), self.param_dim), |(i, j)| {
            self.records[i].theta[j]
        })
    }

    pub fn xs(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.len(), self.data_dim), |(i, j)| self.records[i].x[j])
    }

    /// One JSON object per line: `{"round":..,"theta":[..],"x":[..]}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut store: Option<Self> = None;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SimulationRecord = serde_json::from_str(&line)?;
            let s = store.get_or_insert_with(|| Self::new(rec.theta.len(), rec.x.len()));
            s.push(rec.round, rec.theta, rec.x)?;
        }
        store.ok_or_else(|| Error::InvalidArgument("empty simulation store".into()))
    }
}
