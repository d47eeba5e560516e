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

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{quantity} = {value} outside [{lo}, {hi}]")]
    OutOfDomain {
        quantity: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("incomplete sample grid, missing (tau, rho_b) pairs: {missing:?}")]
    IncompleteGrid { missing: Vec<(f64, f64)> },

    #[error("stiffness matrix is singular; unconstrained rigid modes: {modes:?}")]
    Unconstrained { modes: Vec<String> },

    #[error("linear solve did not reach tolerance {tolerance:e}; residual history {history:?}")]
    SolverDivergence { tolerance: f64, history: Vec<f64> },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Format { .. } | Error::IncompleteGrid { .. }
        )
    }
}
