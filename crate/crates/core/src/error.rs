use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("window {window} is too large: 2w+1 overflows the index type")]
    WindowOverflow { window: usize },

    #[error("row {row} has no valid attention target")]
    EmptyRow { row: usize },

    #[error("invalid attention pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: usize },

    #[error("token id {id} is outside the vocabulary (size {vocab})")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("non-finite loss during gradient check")]
    NonFiniteLoss,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(op: &'static str, detail: impl Into<String>) -> Error {
    Error::DimensionMismatch { op, detail: detail.into() }
}
