use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("could not generate a connected {kind} graph after {attempts} attempts")]
    GenerationFailed { kind: String, attempts: usize },

    #[error("invalid node subset: {0}")]
    InvalidSubset(String),

    #[error("n={n} exceeds the exhaustive enumeration limit {limit}")]
    ExhaustiveLimit { n: usize, limit: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("malformed graph file: {0}")]
    MalformedGraphFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
