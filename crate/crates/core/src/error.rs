use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },
    #[error("function under gradient check is not deterministic")]
    NonDeterministic,
    #[error("bitstream decode error: {0}")]
    Decode(String),
    #[error("model mismatch: bitstream was produced by model {found}, loaded weights are {expected}")]
    ModelMismatch { expected: String, found: String },
    #[error("invalid weights file: {0}")]
    Weights(String),
    #[error("unknown tap `{name}`; valid taps: {}", valid.join(", "))]
    UnknownTap { name: String, valid: Vec<String> },
    #[error("image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
