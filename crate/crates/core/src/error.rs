use std::path::PathBuf;

use crate::solvers::ConvergenceRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible problem: {0}")]
    Feasibility(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("power iteration did not converge after {iterations} iterations (last estimate {estimate})")]
    NotConverged { estimate: f64, iterations: usize },

    #[error("solver diverged at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        record: Box<ConvergenceRecord>,
    },

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            offset,
            message: message.into(),
        }
    }
}
