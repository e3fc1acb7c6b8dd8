//! Crate-wide error type and the process exit codes the CLI maps it to.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A value left an operation as NaN or infinity.
    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    /// Training produced a non-finite loss.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    /// Bad configuration, invalid arguments or malformed input data.
    #[error("config error: {0}")]
    Config(String),

    /// Dataset parsing failure with the offending coordinates.
    #[error("dataset error in {path}: {detail}")]
    Dataset { path: String, detail: String },

    /// Reading or writing run artifacts (checkpoints, logs, reports) failed.
    #[error("artifact error: {0}")]
    Artifact(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn artifact(msg: impl Into<String>) -> Self {
        Error::Artifact(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config/input, 3 artifact IO,
    /// 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dataset { .. } | Error::Shape { .. } => 2,
            Error::Artifact(_) | Error::Io { .. } => 3,
            Error::NonFinite { .. } | Error::Divergence(_) => 4,
        }
    }
}
