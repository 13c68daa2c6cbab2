//! Experiment plumbing: run configuration and grid, baselines, metrics,
//! closed-form oracles, manifests and the command-line interface.

pub mod baselines;
mod checks;
pub mod cli;
mod config;
pub mod metrics;
pub mod oracles;
mod run;
pub mod synthetic;

pub use checks::model_gradcheck;
pub use config::{RunConfig, GRID_BETA_SCALES, GRID_SHAPES};
pub use metrics::{mean_and_se, MetricsReport};
pub use run::{
    baseline_metrics, grid_search, replicate_runs, report, resolve_data_path, save_run,
    sha256_file, train_run, FileDigest, GridPoint, Manifest, Prepared, RunOutcome,
};

use thiserror::Error;

use crate::data::DataError;
use crate::hopfield::HopfieldError;
use crate::model::ModelError;
use crate::tensor::TensorError;
use crate::training::TrainError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Hopfield(#[from] HopfieldError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
