use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("invalid value for `{field}`: {reason}")]
    Value { field: String, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("tokenizer training failed: {0}")]
    Tokenizer(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss is undefined: batch has no masked positions")]
    UndefinedLoss,

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("no entry for key `{0}`")]
    Lookup(String),

    #[error("clusterings are not aligned: {0}")]
    Alignment(String),

    #[error("window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn value(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Value {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn malformed(line: usize, reason: impl Into<String>) -> Self {
        Error::MalformedLine {
            line,
            reason: reason.into(),
        }
    }
}
