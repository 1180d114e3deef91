use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Unreadable, corrupt or otherwise unusable input data.
    #[error("input error ({path}): {reason}")]
    Input { path: PathBuf, reason: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("storage error: {0}")]
    Storage(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// A loss became NaN or infinite. `dump` names the last-known-good
    /// checkpoint when one could be written.
    #[error("numeric divergence at step {step}: {detail}")]
    Divergence {
        step: usize,
        detail: String,
        dump: Option<PathBuf>,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Input {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
