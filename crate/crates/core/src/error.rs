use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric domain error: {0}")]
    NumericDomain(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("sample {sample} has no payload for modality `{modality}`")]
    MissingModality { sample: usize, modality: String },

    #[error("config error at `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("missing artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("data leakage: {0}")]
    Leakage(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {msg}")]
    Training { epoch: usize, batch: usize, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// | code | meaning |
    /// |------|---------|
    /// | 2 | configuration or argument error |
    /// | 3 | missing or unreadable artifact (dataset, checkpoint, payload) |
    /// | 4 | numeric failure (domain error, shape error, divergence) |
    /// | 1 | anything else |
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) => 2,
            Error::MissingArtifact(_) | Error::Io { .. } | Error::Format { .. } | Error::MissingModality { .. } => 3,
            Error::NumericDomain(_) | Error::Shape { .. } | Error::Training { .. } => 4,
            Error::Leakage(_) => 1,
        }
    }
}
