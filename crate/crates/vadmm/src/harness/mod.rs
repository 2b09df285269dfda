//! Experiment harness: configuration, execution roles, baselines, metrics
//! emission, noise sweeps and synthetic fixtures.

pub mod baseline;
pub mod config;
pub mod fixtures;
pub mod manifest;
pub mod metrics;
pub mod run;
pub mod sweep;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::engine::{EngineError, RunFailure};
use crate::transport::TransportError;

pub use baseline::{baseline_centralized, baseline_local, evaluate_model, evaluate_scores, BaselineFit, BaselineOptions};
pub use config::{ExperimentConfig, HyperConfig, PrivacyConfig, Role, RowNormalize};
pub use metrics::{read_metrics_csv, write_metrics_csv, MetricsRecord, CSV_HEADER};
pub use run::{execute_local, prepare, prepare_from_data, run_distributed_loopback, run_experiment, PreparedExperiment, RunSummary};
pub use sweep::{mean_by_multiplier, noise_sweep, write_sweep_csv, SweepRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Run(#[from] RunFailure),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("baseline training failed: {0}")]
    Baseline(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    /// Process exit code: 1 for usage/config problems, 2 for runtime and
    /// protocol failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            _ => 2,
        }
    }
}
