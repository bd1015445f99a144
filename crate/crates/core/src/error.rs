use thiserror::Error;

/// Errors surfaced by the solver library.
///
/// Oracle *failures discovered by validation* are not errors: they are data in
/// the validation report. Errors here are contract violations (bad dimensions,
/// missing oracles, non-finite values where finiteness is required) or hard
/// numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("oracle contract violated: {0}")]
    OracleContract(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("subproblem infeasible: {0}")]
    Infeasible(String),

    #[error("unknown benchmark problem `{0}`")]
    UnknownProblem(String),

    #[error("unknown check `{0}`")]
    UnknownCheck(String),

    #[error("trace parse error at line {line}: {message}")]
    TraceParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn oracle(msg: impl Into<String>) -> Self {
        Error::OracleContract(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}
