//! Shared error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A NaN or infinity surfaced in a forward value or gradient.
    #[error("numeric fault in primitive `{op}`: {detail}")]
    NumericFault { op: &'static str, detail: String },

    /// Training produced a non-finite loss; carries the batch provenance dump.
    #[error("training diverged at step {step}:\n{records}")]
    Diverged { step: usize, records: String },

    /// A dataset, vector, or checkpoint file failed to parse.
    #[error("parse error in {path} at {location}: {detail}")]
    Parse {
        path: String,
        location: String,
        detail: String,
    },

    /// A class required by an operation is absent from its input.
    #[error("missing class {class}: {detail}")]
    MissingClass { class: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
