use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("block structure mismatch: {0}")]
    Structure(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{context} did not converge after {iterations} iterations (last residual {residual:e})")]
    Convergence {
        context: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("point outside the operator domain: {0}")]
    Domain(String),

    #[error("read of block {block} at iteration {read} is outside the history window [{oldest}, {p}]")]
    Staleness {
        block: usize,
        read: usize,
        oldest: usize,
        p: usize,
    },

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}
