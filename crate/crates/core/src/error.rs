use alloc::boxed::Box;
use alloc::string::String;

use crate::game::NashSolution;

/// Input validation failures shared by the model layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn check_len(expected: usize, found: usize) -> Result<(), Error> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}

/// Failure modes of the open-loop Nash solver.
#[derive(Debug, Clone, thiserror::Error)]
pub enum SolveError {
    /// Iteration budget exhausted; carries the iterate with the smallest residual.
    #[error("iteration limit reached (best residual {:.3e})", best.residual_norm)]
    MaxIterationsExceeded { best: Box<NashSolution> },
    #[error("KKT system singular after regularization up to {regularization:.1e}")]
    SingularKktSystem { regularization: f64 },
    #[error("non-finite iterate")]
    NonFiniteIterate,
    #[error(transparent)]
    Input(#[from] Error),
}

impl SolveError {
    /// The best available iterate, if the failure produced one.
    pub fn best_iterate(&self) -> Option<&NashSolution> {
        match self {
            SolveError::MaxIterationsExceeded { best } => Some(best),
            _ => None,
        }
    }
}
