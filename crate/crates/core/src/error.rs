use thiserror::Error;

/// Errors raised by the summarization library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("idf statistics need a non-empty corpus")]
    EmptyCorpus,

    #[error("document has no sentences")]
    EmptyDocument,

    #[error("invalid chunking config: stride {stride} exceeds window {window}")]
    StrideExceedsWindow { window: usize, stride: usize },

    #[error("invalid chunking config: {0}")]
    InvalidChunkingConfig(String),

    #[error("invalid config value for {field}: {detail}")]
    InvalidConfig { field: &'static str, detail: String },

    #[error("alignment needs at least one chunk")]
    NoChunks,

    #[error("shape mismatch in op `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("backward pass needs a scalar loss, got shape [{rows}, {cols}]")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("gold chunk label {label} out of range for {chunks} chunks")]
    LabelOutOfRange { label: usize, chunks: usize },

    #[error("prediction/gold length mismatch: {detail}")]
    LengthMismatch { detail: String },

    #[error("cannot encode an empty chunk")]
    EmptyChunk,

    #[error("model parameters contain non-finite values ({tensor})")]
    NonFiniteParams { tensor: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("invalid synthetic-corpus config: {0}")]
    InvalidSynthConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
