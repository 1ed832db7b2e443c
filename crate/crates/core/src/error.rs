use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("step {index} ({transition}) is not enabled")]
    NotEnabled { index: usize, transition: String },

    #[error("node budget of {budget} exceeded")]
    Budget { budget: usize },

    #[error("sound under-approximation: {0}")]
    SoundUnderapprox(String),

    #[error("model mismatch: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("history length {len} exceeds cap {cap}")]
    HistoryTooLong { len: usize, cap: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(line: usize, col: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, col, msg: msg.into() }
    }
}
