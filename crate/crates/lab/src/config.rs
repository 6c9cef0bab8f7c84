//! TOML experiment files. Every key is optional; missing ones take the
//! built-in defaults printed by `selfheal --print-default-config`.

use std::fs;
use std::path::Path;

use selfheal_core::experiment::ExperimentConfig;

use crate::{io_err, LabError};

pub fn parse(text: &str, origin: &Path) -> Result<ExperimentConfig, LabError> {
    toml::from_str(text).map_err(|e| LabError::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, LabError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse(&text, path)
}

pub fn default_toml() -> String {
    to_toml(&ExperimentConfig::default())
}

pub fn to_toml(cfg: &ExperimentConfig) -> String {
    // every field is plain data, so serialization cannot fail
    toml::to_string(cfg).expect("config serializes to TOML")
}

/// Validates and returns the warnings for out-of-range sweep points.
pub fn check(cfg: &ExperimentConfig) -> Result<Vec<String>, LabError> {
    Ok(cfg.validate()?)
}
