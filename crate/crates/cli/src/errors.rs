//! Error-to-exit-code mapping: 2 for invalid input (missing or malformed
//! files, bad configuration), 1 for runtime failures.

use rgbps_core::Error as CoreError;
use rgbps_io::IoError;

pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

fn core_is_input(err: &CoreError) -> bool {
    matches!(
        err,
        CoreError::InvalidConfig { .. }
            | CoreError::InvalidInput { .. }
            | CoreError::DimensionMismatch { .. }
            | CoreError::BufferLength { .. }
            | CoreError::SingularLighting { .. }
            | CoreError::IndexOutOfRange { .. }
    )
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        if core_is_input(&err) {
            CliError::input(err.to_string())
        } else {
            CliError::runtime(err.to_string())
        }
    }
}

impl From<IoError> for CliError {
    fn from(err: IoError) -> Self {
        match &err {
            IoError::File { .. } | IoError::Format { .. } | IoError::Config { .. } => {
                CliError::input(err.to_string())
            }
            IoError::Core(core) if core_is_input(core) => CliError::input(err.to_string()),
            _ => CliError::runtime(err.to_string()),
        }
    }
}
