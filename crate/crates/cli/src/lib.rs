//! Experiment runner: configuration, artifacts, diagnostics and curves.

pub mod artifacts;
pub mod config;
pub mod curves;
pub mod diagnose;
pub mod experiment;

pub use config::{ConfigError, ExperimentConfig, Method};
pub use curves::emit_curves;
pub use diagnose::diagnose;
pub use experiment::{run_experiment, simulate};

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures during a run.
pub const EXIT_RUN: i32 = 1;
