use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("alignment error: {0}")]
    Alignment(String),

    #[error("window error: day {t} needs {needed} days of history")]
    Window { t: usize, needed: usize },

    #[error("day index {t} out of range for market of length {len}")]
    OutOfRange { t: usize, len: usize },

    /// All-zero action after cash clamping; callers substitute the all-cash weights.
    #[error("degenerate action: no nonzero weight to normalize")]
    DegenerateAction,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("transaction cost {0} wipes out the portfolio")]
    Ruin(f64),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("insufficient universe: {available} scorable assets, {required} required")]
    InsufficientUniverse { available: usize, required: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
