use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a documented precondition or type invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// A numerical routine failed or produced non-finite values.
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
