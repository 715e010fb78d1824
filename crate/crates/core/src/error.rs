use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate pair geometry: transmitter and receiver phase centers coincide")]
    DegenerateGeometry,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("numerical fault: {0}")]
    NumericalFault(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("belief of aperture {aperture} diverged at iteration {iteration}: {reason}")]
    Divergence {
        aperture: usize,
        iteration: usize,
        reason: String,
    },

    #[error("no converged runs available")]
    NoConvergedRuns,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("scenario parse error: {0}")]
    ScenarioParse(#[from] toml::de::Error),

    #[error("scenario serialization error: {0}")]
    ScenarioSerialize(#[from] toml::ser::Error),

    #[error("json: {0}")]
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
