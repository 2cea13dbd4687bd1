use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("example {id}: {message}")]
    InvalidExample { id: String, message: String },
    #[error("duplicate example id {0:?}")]
    DuplicateId(String),
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate vocabulary piece {piece:?}")]
    DuplicatePiece { line: usize, piece: String },
    #[error("vocabulary is missing special token {0}")]
    MissingSpecial(&'static str),
    #[error("line {line}: malformed merge: {message}")]
    MalformedMerge { line: usize, message: String },
    #[error("cannot train BPE on an empty corpus")]
    EmptyCorpus,
    #[error("encoded input has {len} positions, exceeding the cap of {cap}")]
    InputTooLong { len: usize, cap: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("bad file format: {0}")]
    Format(String),
    #[error("no feature matrix for example {0:?}")]
    MissingFeatures(String),
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(&'static str),
    #[error("evaluation inputs are misaligned: {0}")]
    Misaligned(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
