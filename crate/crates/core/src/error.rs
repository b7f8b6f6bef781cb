use thiserror::Error;

/// Errors produced by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("control region is empty")]
    EmptyRegion,

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(
        "singular Gramian{}: condition {cond:.3e} exceeds threshold (lambda = {lambda}, |omega| = {measure}, modes = {modes})",
        slice.map(|j| format!(" in slice {j}")).unwrap_or_default()
    )]
    SingularGramian {
        lambda: f64,
        measure: f64,
        modes: usize,
        cond: f64,
        slice: Option<usize>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
