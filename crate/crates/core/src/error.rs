use std::path::PathBuf;

use thiserror::Error;

use crate::vocab::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("token id {id} is outside a vocabulary of {vocab_size} tokens")]
    InvalidToken { id: TokenId, vocab_size: usize },

    #[error("unknown token {0:?}")]
    UnknownToken(String),

    #[error("constraint compilation failed: {0}")]
    Compile(String),

    #[error("constraint on {0:?} cannot be satisfied: no vocabulary word shares its lemma")]
    Unsatisfiable(String),

    #[error("{what} needs {requested}, which exceeds the cap of {limit}")]
    Capacity {
        what: &'static str,
        requested: usize,
        limit: usize,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("scorer emitted a log-distribution whose mass is {mass} (expected 1)")]
    NotADistribution { mass: f64 },

    #[error("training diverged at epoch {epoch}: mean loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no embedding for {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),

    #[error("malformed data: {0}")]
    Data(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn dimension(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context: context.into(),
            expected,
            actual,
        }
    }

    /// Numeric failures are those raised by floating point arithmetic rather
    /// than by bad inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_) | Error::NotADistribution { .. } | Error::Divergence { .. }
        )
    }
}
