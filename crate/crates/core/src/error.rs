use std::time::Duration;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failure of a single request inside a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedFailure {
    pub index: usize,
    pub cause: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported document version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("document kind {found:?} does not match expected {expected:?}")]
    Kind { found: String, expected: String },

    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("request timed out after {0:?}")]
    Timeout(Duration),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("all {} requests failed: {}", failures.len(), summarize(failures))]
    AllFailed { failures: Vec<IndexedFailure> },

    #[error("capability error: {0}")]
    Capability(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("shape error: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("incompatible fingerprints: {0}")]
    Incompatible(String),

    #[error("domain {domain:?} has no questions left after filtering")]
    DomainExhausted { domain: String },

    #[error("domain {domain:?} has {available} questions, {required} required")]
    InsufficientQuestions {
        domain: String,
        available: usize,
        required: usize,
    },

    #[error("value out of range: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("labeling error: {0}")]
    Labeling(String),

    #[error("logit vectors are not aligned: {0}")]
    Alignment(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn summarize(failures: &[IndexedFailure]) -> String {
    failures
        .iter()
        .map(|f| format!("[{}] {}", f.index, f.cause))
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Wraps the error with a description of what was being processed
    /// (a trigger id, a question id, a file path).
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through any `Context` layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether a request that failed with this error may be retried.
    pub fn is_retryable(&self) -> bool {
        matches!(self.root(), Error::Transport { .. } | Error::Timeout(_))
    }
}
