use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("entity vocabulary is empty")]
    EmptyVocabulary,

    #[error("unknown entity {0:?}")]
    UnknownEntity(String),

    #[error("offset error: {0}")]
    Offset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible negative quota {quota}: only {available} non-gold entities available")]
    InfeasibleQuota { quota: usize, available: usize },

    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("matrix file {}: {message}", path.display())]
    MatrixFormat { path: PathBuf, message: String },

    #[error("document alignment: {0}")]
    Alignment(String),

    #[error("{}: {source}", path.display())]
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

    pub fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad configuration or malformed input files,
    /// as opposed to failures while running the pipeline itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Divergence { .. } | Error::DegenerateBatch(_) | Error::Shape(_)
        )
    }
}
