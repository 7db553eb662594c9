use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected_w}x{expected_h}, got {got_w}x{got_h}")]
    DimensionMismatch {
        what: &'static str,
        expected_w: usize,
        expected_h: usize,
        got_w: usize,
        got_h: usize,
    },

    #[error("{what}: buffer length {got} does not match {expected} pixels")]
    BufferLength {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    #[error("lighting matrix is singular (|det| = {det:.3e} below tolerance {tol:.3e})")]
    SingularLighting { det: f64, tol: f64 },

    #[error("{count} pixel(s) with near-horizontal normals (n_z <= {eps:.1e}), first at ({x}, {y})")]
    HorizontalNormals {
        count: usize,
        eps: f64,
        x: usize,
        y: usize,
    },

    #[error("chromaticity component {value:.3e} below minimum {min:.1e}")]
    ChromaticityTooSmall { value: f64, min: f64 },

    #[error("{what}: index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("basis matrix is rank deficient: rank {rank} < {expected}")]
    RankDeficientBasis { rank: usize, expected: usize },

    #[error("histogram has no nonzero bins")]
    EmptyHistogram,

    #[error("mask is empty: {context}")]
    EmptyMask { context: &'static str },

    #[error("surface generation rejected {attempts} base planes in a row")]
    RejectionLimit { attempts: usize },

    #[error("invalid configuration: {reason}")]
    InvalidConfig { reason: String },

    #[error("invalid input: {reason}")]
    InvalidInput { reason: String },
}

impl Error {
    pub fn config(reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            reason: reason.into(),
        }
    }

    pub fn input(reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            reason: reason.into(),
        }
    }
}
