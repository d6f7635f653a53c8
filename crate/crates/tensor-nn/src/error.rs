use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("attention row {row} is fully masked")]
    FullyMaskedRow { row: usize },
    #[error("backward already ran on this tape; rebuild the forward pass first")]
    TapeConsumed,
    #[error("loss node must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("optimizer step before backward: parameter `{0}` has no gradient")]
    StepBeforeBackward(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{0}` registered twice")]
    DuplicateParam(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("model width {d} not divisible by {heads} heads")]
    HeadSplit { d: usize, heads: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> NnError {
    NnError::Shape {
        op,
        detail: detail.into(),
    }
}
