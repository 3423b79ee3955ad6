// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum AttribError {
    #[error("length mismatch: prompt has {prompt} tokens but mask has {mask}")]
    LengthMismatch { prompt: usize, mask: usize },

    #[error("empty target sequence")]
    EmptyTarget,

    #[error("empty token sequence")]
    EmptySequence,

    #[error("token id {id} out of range for vocabulary of size {vocabulary_size}")]
    TokenOutOfRange { id: u32, vocabulary_size: usize },

    #[error("prompt of length {len} exceeds the model limit of {max}")]
    PromptTooLong { len: usize, max: usize },

    #[error("model does not support {0}")]
    UnsupportedCapability(&'static str),

    #[error("invalid cardinality k = {k} for prompt length {len}")]
    InvalidCardinality { k: usize, len: usize },

    #[error("invalid search state: {0}")]
    InvalidState(String),

    #[error("oracle budget exceeded: C({len}, {k}) = {combinations} > {budget}")]
    OracleBudget { len: usize, k: usize, combinations: u128, budget: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown model '{0}'")]
    UnknownModel(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),

    #[error("metric unavailable: {0}")]
    MetricUnavailable(String),

    #[error("{path}:{line}: malformed dataset line: {message}")]
    MalformedLine { path: PathBuf, line: usize, message: String },

    #[error("dataset {0} produced no usable instances")]
    EmptyDataset(PathBuf),

    #[error("config error at key '{key}': {message}")]
    Config { key: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl AttribError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        AttribError::Io { path: path.into(), source }
    }

    /// True for errors caused by the environment (missing or malformed
    /// files, unknown or incapable models) rather than by bad arguments.
    pub fn is_environmental(&self) -> bool {
        matches!(
            self,
            AttribError::Io { .. }
                | AttribError::UnknownModel(_)
                | AttribError::EmptyDataset(_)
                | AttribError::MalformedLine { .. }
                | AttribError::UnsupportedCapability(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, AttribError>;
