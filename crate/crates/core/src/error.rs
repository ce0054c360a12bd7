use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("zero-length signal")]
    EmptySignal,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{what} needs {requested} entries, limit is {limit}")]
    GuardExceeded {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("non-finite values in {0}")]
    NonFinite(&'static str),

    #[error("batch size {batch} exceeds dataset size {len}")]
    BatchTooLarge { batch: usize, len: usize },

    #[error("constant target: SI-SNR projection undefined")]
    ConstantTarget,

    #[error("image {height}x{width} smaller than the {window}x{window} SSIM window")]
    ImageTooSmall { height: usize, width: usize, window: usize },

    #[error("training diverged at iteration {iteration} (|theta| = {theta_norm:e})")]
    Diverged { iteration: usize, theta_norm: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn decode(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Decode {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        Error::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// Process exit code for the command-line front end: 1 for configuration
    /// and argument problems, 2 for I/O, 3 for training divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Decode { .. } | Error::UnsupportedBitDepth(_) | Error::EmptySignal => 2,
            Error::Diverged { .. } => 3,
            _ => 1,
        }
    }
}
