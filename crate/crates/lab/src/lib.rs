pub use selfheal_core as core;

pub mod check;
pub mod config;
pub mod emit;
pub mod runner;
pub mod study;

use std::path::PathBuf;

use selfheal_core::experiment::{ConfigError, ExperimentError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Config problems, including a mode that cannot run the requested study,
    /// exit with 2. Everything else exits with 1.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            LabError::Parse { .. }
                | LabError::Config(_)
                | LabError::Experiment(
                    ExperimentError::Config(_) | ExperimentError::LearningDisabled(_)
                )
        )
    }
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> LabError {
    let path = path.into();
    move |source| LabError::Io { path, source }
}
