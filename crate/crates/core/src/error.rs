use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed a value outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// An operation was invoked in the wrong order (e.g. backward without forward).
    #[error("invalid state: {0}")]
    State(String),

    /// Training produced a NaN or infinity.
    #[error("non-finite value in `{param}`: {detail}")]
    Numeric { param: String, detail: String },

    /// A dataset, manifest or weight file is malformed.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}
