//! File formats, configuration and preprocessing for the RGB photometric
//! stereo pipeline.

pub mod config;
pub mod csvout;
pub mod error;
pub mod pfm;
pub mod pngout;
pub mod preprocess;
pub mod rig;

pub use config::RunConfig;
pub use error::{IoError, Result};
pub use preprocess::{preprocess_real, Preprocessed, RealInput};
