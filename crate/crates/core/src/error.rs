use thiserror::Error;

/// Errors raised by the solver, simulators and serializers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or argument violates its documented domain.
    #[error("{0}")]
    Validation(String),

    /// The free-boundary shooting or the ODE integration failed.
    #[error("{0}")]
    Solver(String),

    /// A path or solution file was produced from different inputs.
    #[error("provenance mismatch: {0}")]
    Provenance(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
