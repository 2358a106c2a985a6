use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing file referenced by config: {0}")]
    MissingFile(PathBuf),
    #[error("parse error at row {row}: {msg}")]
    ParseError { row: usize, msg: String },
    #[error("ragged sequence: sample {sample_id} has {got} steps, expected {expected} (row {row})")]
    RaggedSequence {
        sample_id: String,
        expected: usize,
        got: usize,
        row: usize,
    },
    #[error("non-finite value at epoch {epoch}, step {step}")]
    AbortOnNaN { epoch: usize, step: usize },
    #[error("non-finite gradient: {0}")]
    NanGradient(String),
    #[error(transparent)]
    Core(#[from] rhel_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
