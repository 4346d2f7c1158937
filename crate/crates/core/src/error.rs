use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Open {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("I/O error after line {line}: {source}")]
    Io {
        line: u64,
        #[source]
        source: io::Error,
    },

    #[error("invalid UTF-8 on line {line} at byte offset {offset}")]
    Decode { line: u64, offset: u64 },

    #[error("duplicate vocabulary token {token:?} on lines {first_line} and {second_line}")]
    DuplicateToken {
        token: String,
        first_line: usize,
        second_line: usize,
    },

    #[error("vocabulary contains an empty entry on line {0}")]
    EmptyToken(usize),

    #[error("vocabulary is missing required special token {0}")]
    MissingSpecial(String),

    #[error("base size {base_size} exceeds vocabulary size {len}")]
    BaseSize { base_size: usize, len: usize },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("every sentence tokenizes to [UNK] only under the base vocabulary")]
    DegenerateCorpus,

    #[error("subword {0:?} is absent from the unigram model")]
    UnknownPiece(String),

    #[error("token id {id} out of range for vocabulary of size {len}")]
    IdOutOfRange { id: u32, len: usize },

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("vocabulary alignment mismatch at id {id}: expected {expected:?}, found {found:?}")]
    Alignment {
        id: usize,
        expected: String,
        found: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Errors caused by how the tool was invoked rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::Config(_))
    }
}
