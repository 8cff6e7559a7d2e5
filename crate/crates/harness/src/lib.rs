//! Experiment runner for the in-network path-selection simulator.
//!
//! Loads TOML scenario and experiment files, runs the time-series, learning
//! rate sweep and throughput comparison experiments, and writes CSV.

use std::path::PathBuf;

use thiserror::Error;

pub mod cli;
pub mod config;
pub mod exec;
pub mod experiment;
pub mod stats;

pub use config::{ExperimentSpec, Overrides, Scenario};
pub use exec::{map_runs, map_runs_with, Execution};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Sim(#[from] inrl_core::sim::SimError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
}
