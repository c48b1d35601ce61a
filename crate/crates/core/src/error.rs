use thiserror::Error;

/// Errors raised by samplers, oracles and verification routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no category has a finite log-weight")]
    NoValidCategory,

    #[error("inconsistent sampler state: {0}")]
    InconsistentState(String),

    /// The stick-extension loop hit its iteration cap before the residual
    /// mass dropped below the smallest slice.
    #[error("runaway extension: {iterations} sticks drawn without reaching umin = {umin:e}")]
    RunawayExtension { umin: f64, iterations: usize },

    #[error("n = {n} is too large for exhaustive enumeration (max {max})")]
    TooLarge { n: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
