//! Error type shared by all modules of the crate.

use std::path::PathBuf;

/// Errors produced by construction, compute, I/O and training paths.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Shapes of two operands do not line up (image vs flow, estimate vs
    /// reference, stack vs network input, ...).
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scalar parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A warped stack mode was requested but the triplet carries no flow.
    #[error("missing flow field for mode `{0}`")]
    MissingFlow(String),

    /// Flow file does not start with the expected magic tag.
    #[error("{path}: bad magic tag {found:?}, expected \"PIEH\"")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    /// A binary payload ended before the declared size.
    #[error("{path}: truncated payload, expected {expected} bytes, got {actual}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        actual: usize,
    },

    /// Nonpositive or absurd dimensions in a file header.
    #[error("{path}: bad dimensions {width}x{height}")]
    BadFileDimensions {
        path: PathBuf,
        width: i64,
        height: i64,
    },

    /// PGM/PPM header could not be parsed.
    #[error("{path}: malformed header: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },

    /// Only maxval 255 and 65535 are first-class.
    #[error("{path}: unsupported maxval {maxval} (only 255 and 65535)")]
    UnsupportedMaxval { path: PathBuf, maxval: u32 },

    /// Underlying filesystem error, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Checkpoint file is structurally invalid.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A manifest line does not have the expected six fields.
    #[error("{path}:{line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    /// Training diverged; carries the iteration and the offending value.
    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFiniteLoss { iteration: usize, loss: f64 },

    /// Training was asked to run on an empty dataset.
    #[error("empty dataset")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
