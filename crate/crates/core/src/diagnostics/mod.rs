//! Accuracy and calibration diagnostics.

pub mod distance;
pub mod gof;
pub mod kde;
pub mod mmd;
pub mod sbc;
pub mod special;

pub use distance::{median, median_distance};
pub use gof::{gaussian_baseline_gof, likelihood_gof, ConditionalSampler, SimulatorSampler};
pub use kde::{kde_log_prob, Bandwidth};
pub use mmd::{median_heuristic, mmd, mmd_with_bandwidth};
pub use sbc::{sbc_ranks, RankRecord, SbcResult};
