use thiserror::Error;

/// Errors raised by the dispatch library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph is malformed: {0}")]
    MalformedGraph(String),

    #[error("invalid instance field `{field}`: {message}")]
    InvalidInstance { field: &'static str, message: String },

    #[error("station label {0} is not a station of this instance")]
    UnknownStation(usize),

    #[error("policy has no entry for state {state}, location {location}")]
    MissingPolicyEntry { state: usize, location: usize },

    #[error("linear solver failed: {0}")]
    Solver(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
