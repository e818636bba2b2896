use thiserror::Error;

use crate::timexpr::{EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is numerically singular (singular value ratio {ratio:e})")]
    Singular { ratio: f64 },

    #[error("integrator step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("integration exceeded {steps} steps at t = {t}")]
    TooManySteps { steps: usize, t: f64 },

    #[error("solution escaped (|x| > {bound:e}) at t = {t}")]
    BlowUp { t: f64, bound: f64 },

    #[error("t = {t} outside the integrated span [{lo}, {hi}]")]
    OutOfSpan { t: f64, lo: f64, hi: f64 },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Malformed or unreadable input file. `location` is a JSON path such as
    /// `terms[3].coeff`, empty for whole-file problems.
    #[error("{file}: {}{message}", if location.is_empty() { String::new() } else { format!("{location}: ") })]
    File {
        file: String,
        location: String,
        message: String,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True for failures that come from the numerics rather than from
    /// malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Eval(_)
                | Error::Singular { .. }
                | Error::StepUnderflow { .. }
                | Error::TooManySteps { .. }
                | Error::BlowUp { .. }
                | Error::OutOfSpan { .. }
        )
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
