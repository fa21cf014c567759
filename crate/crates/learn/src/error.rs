use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("zero-norm embedding (provider invariant violated)")]
    ZeroNormEmbedding,

    #[error("non-finite gradient; step rejected")]
    NonFiniteGradient,

    #[error("non-finite loss at step {step}: {detail}")]
    NonFiniteLoss { step: usize, detail: String },

    #[error("empty test set")]
    EmptyTestSet,

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Core(#[from] rigdiff_core::CoreError),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type LearnResult<T> = Result<T, LearnError>;
