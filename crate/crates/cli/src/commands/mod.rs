pub mod baseline;
pub mod bench;
pub mod eval;
pub mod integrate;
pub mod reconstruct;
pub mod render;
pub mod synth;

use std::path::{Path, PathBuf};

use crate::errors::CliError;
use rgbps_io::RunConfig;

/// Load a config file when given, otherwise defaults; CLI flags are applied
/// on top by each command.
pub fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::input(format!(
                    "config file not found: {}",
                    p.display()
                )));
            }
            Ok(RunConfig::load(p)?)
        }
        None => Ok(RunConfig::default()),
    }
}

/// Fail with exit code 2 when a required input file is missing.
pub fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::input(format!(
            "{what} not found: {}",
            path.display()
        )));
    }
    Ok(())
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))
}
