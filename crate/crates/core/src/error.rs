use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    /// Node ids in this message are 1-based, as in every text format.
    #[error("routing infeasible: node {node} has no directed path to gateway {gateway}")]
    RoutingInfeasible { node: usize, gateway: usize },

    #[error("insufficient measurements: decoder needs {required} rows but the system has {available}")]
    InsufficientMeasurements { required: usize, available: usize },

    #[error("{aborted} of {trials} trials aborted (first failure: {first})")]
    TrialsAborted {
        aborted: usize,
        trials: usize,
        first: String,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidConfiguration(message.into())
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_configuration(&self) -> bool {
        matches!(self, Error::InvalidConfiguration(_) | Error::Parse { .. })
    }
}
