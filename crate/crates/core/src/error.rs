use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible region: could not place {antennas} antennas with spacing {spacing} m in a {side} m square")]
    InfeasibleRegion {
        antennas: usize,
        spacing: f64,
        side: f64,
    },

    #[error("numeric failure in {block}: {reason}")]
    NumericFailure { block: &'static str, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numeric(block: &'static str, reason: impl Into<String>) -> Self {
        Error::NumericFailure {
            block,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
