use std::path::PathBuf;

use lsx_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss {value} at {context}")]
    Divergence { value: f64, context: String },
    #[error("class {0} has no samples in the evaluated set")]
    ClassAbsent(usize),
    #[error("no candidate rules for class {0}")]
    EmptyCandidates(usize),
    #[error("empty critic set")]
    EmptyCriticSet,
    #[error("unsatisfiable rule: {0}")]
    Unsatisfiable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("rule parse error: {0}")]
    RuleParse(String),
    #[error("LSX iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
