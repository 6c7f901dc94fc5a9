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
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("not enough {class} profiles: requested {requested}, available {available}")]
    InsufficientClass {
        class: String,
        requested: usize,
        available: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("line {line}: vector has {found} components, expected {expected}")]
    VectorLength { line: usize, expected: usize, found: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("unsupported model file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("test profile {0} found in fitting inputs")]
    Leakage(String),
    #[error("encoder mismatch: model uses {model}, embeddings use {data}")]
    EncoderMismatch { model: String, data: String },
    #[error("missing embedding for profile {0}")]
    MissingEmbedding(String),
    #[error("class absent from fold {0}")]
    FoldMissingClass(usize),
    #[error("{0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable kind, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Empty(_) => "empty",
            Error::InsufficientClass { .. } => "insufficient_class",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::VectorLength { .. } => "vector_length",
            Error::SingleClass => "single_class",
            Error::InvalidParam(_) => "invalid_param",
            Error::Version { .. } => "version",
            Error::Corrupt(_) => "corrupt",
            Error::Leakage(_) => "leakage",
            Error::EncoderMismatch { .. } => "encoder_mismatch",
            Error::MissingEmbedding(_) => "missing_embedding",
            Error::FoldMissingClass(_) => "fold_missing_class",
            Error::Config(_) => "config",
        }
    }
}
