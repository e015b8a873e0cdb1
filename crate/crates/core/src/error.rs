use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Grid axis, used to name the offending dimension in errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Width,
    Height,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Width => f.write_str("width"),
            Axis::Height => f.write_str("height"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported grid {axis}: {value}")]
    Dimension { axis: Axis, value: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("geometry: {0}")]
    Geometry(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("missing basis for species '{species}': expected {path}; build it with `holospeck basis`")]
    MissingBasis { species: String, path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 numeric failure, 4 I/O or format.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension { .. }
            | Error::Shape(_)
            | Error::Parameter(_)
            | Error::Geometry(_)
            | Error::Config(_)
            | Error::Domain(_)
            | Error::Degenerate(_)
            | Error::MissingBasis { .. } => 2,
            Error::Divergence { .. } | Error::NonConvergence(_) => 3,
            Error::Format { .. } | Error::Io { .. } | Error::Json { .. } => 4,
        }
    }
}
