use thiserror::Error;

use crate::disorder::DisorderError;
use crate::exact::ExactError;
use crate::harness::ConfigError;
use crate::kernel::KernelError;
use crate::localfn::LocalFnError;

/// Errors raised by the Monte Carlo engines (forward, dual, range).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A pathwise invariant failed inside a simulation loop.
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Disorder(#[from] DisorderError),
    #[error(transparent)]
    LocalFn(#[from] LocalFnError),
    #[error(transparent)]
    Exact(#[from] ExactError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("hypothesis failed: {0}")]
    Hypothesis(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn is_invariant_violation(&self) -> bool {
        matches!(self, Error::Sim(SimError::InvariantViolation(_)))
    }

    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(self, Error::Hypothesis(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
