use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("infeasible stuck fractions: gamma_on {gamma_on} + gamma_off {gamma_off} > 1")]
    InfeasibleState { gamma_on: f64, gamma_off: f64 },

    #[error("signal ingestion failed: {0}")]
    Ingestion(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("malformed problem: {0}")]
    Problem(String),

    #[error("i/o on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
