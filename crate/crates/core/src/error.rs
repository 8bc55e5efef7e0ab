use thiserror::Error;

/// Errors raised by the channel models, solvers and rate evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("dimension mismatch: prior has {prior} symbols, channel has {channel} inputs")]
    DimensionMismatch { prior: usize, channel: usize },

    #[error("distribution not normalized: sum = {sum}")]
    NotNormalized { sum: f64 },

    #[error("infeasible constraint: target {target} outside [{min}, {max}]")]
    Infeasible { target: f64, min: f64, max: f64 },

    #[error("multiplier bracket expansion failed after {doublings} doublings")]
    MultiplierBracket { doublings: usize },

    #[error("prior update produced an all-zero vector")]
    DegeneratePrior,

    #[error("formula diverges: {0}")]
    Divergent(&'static str),

    #[error("quadrature did not reach tolerance: estimate {estimate}, error {error}")]
    Quadrature { estimate: f64, error: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
