use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("objective is not strongly convex (m = {m:e}, l = {l:e})")]
    NotStronglyConvex { m: f64, l: f64 },

    #[error("label-skew plan is infeasible: {0}")]
    InfeasibleSkew(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("partition sizes sum to {got}, dataset has {expected} rows")]
    SizeMismatch { expected: usize, got: usize },

    #[error("inner minimization did not converge: gradient norm {grad_norm:e} after {iters} iterations")]
    InnerSolveFailure { grad_norm: f64, iters: usize },

    #[error("centralized solver did not converge: gradient norm {grad_norm:e} after {iters} iterations")]
    SolverFailure { grad_norm: f64, iters: usize },

    #[error("client {index}: {source}")]
    Client {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
