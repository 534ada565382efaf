//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A shape or parameter disagreement between two inputs.
    #[error("configuration error: {0}")]
    Config(String),

    /// A 3D point with z <= 0 cannot be projected.
    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },

    /// An ROI that contains no valid 3D points.
    #[error("ROI contains no valid points")]
    EmptyRoi,

    /// A class id with no entry in the prior table.
    #[error("unknown class id {0}")]
    UnknownClass(usize),

    /// An out-of-range bin or class index.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A malformed text or binary record. `line` is 1-based where applicable.
    #[error("format error (line {line}): {msg}")]
    Format { line: usize, msg: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss is not finite")]
    TrainingDiverged { step: usize },

    /// Checkpoint file does not match the expected layout or config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(line: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
