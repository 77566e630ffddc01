use alloc::string::String;

/// Errors raised by the core operators, model and trainer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("class {class} has {available} labeled pixels, {requested} requested")]
    InsufficientSamples {
        class: u16,
        available: usize,
        requested: usize,
    },

    #[error("non-finite gradient at parameter `{path}`")]
    NonFiniteGradient { path: String },

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
