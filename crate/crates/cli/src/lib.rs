//! Reproducible workflows over the grouped CNN library: ingestion,
//! clustering, training, evaluation, comparison and parameter counts.
//! Every command is a pure function of the config, its input files and
//! the seed, and every output names the hash of the config.

pub mod commands;
pub mod config;
mod pipeline;

pub use commands::{cmd_cluster, cmd_compare, cmd_eval, cmd_ingest, cmd_param_count, cmd_train, EvalSplit};
pub use config::RunConfig;
pub use pipeline::{cluster_inputs, prepare, ClusterResult, Prepared};

use gcnn_core::model::ModelError;
use gcnn_core::spectral::SpectralError;
use gcnn_core::trainer::TrainError;
use gcnn_core::tsdata::DataError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    /// Process exit code: 2 config, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::NonConvergence(_) => CliError::Numerical(e.to_string()),
            SpectralError::InvalidK { .. } | SpectralError::TooLarge { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidSpec(_) | ModelError::MissingAssignment | ModelError::AssignmentMismatch(_) => {
                CliError::Config(e.to_string())
            }
            ModelError::Tensor(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::Geometry(_) => CliError::Config(e.to_string()),
            TrainError::Diverged { .. } | TrainError::Singular(_) | TrainError::Tensor(_) => {
                CliError::Numerical(e.to_string())
            }
            TrainError::Model(m) => m.into(),
            TrainError::EmptySet(_) | TrainError::Io(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}
