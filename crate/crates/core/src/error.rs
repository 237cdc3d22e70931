use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("infeasible instance: {0}")]
    Infeasible(String),

    /// An enumeration would exceed its configured budget.
    #[error("enumeration budget exceeded: {0}")]
    Overflow(String),

    #[error("solver failed on guess {index}: {source}")]
    Solver {
        index: u128,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
