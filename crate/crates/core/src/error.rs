use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed input at line {line}: {reason}")]
    MalformedFile { line: usize, reason: String },

    #[error("bad probabilities: {0}")]
    BadProbabilities(String),

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("probability level {0} is outside the admissible range")]
    BadAlpha(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("wrong regime: {0}")]
    WrongRegime(String),

    #[error("infeasible multipliers: tied mass {tied_mass} outside [0, {capacity}]")]
    InfeasibleMultipliers { tied_mass: f64, capacity: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("non-finite function value at {at:?}")]
    NonFinite { at: Vec<f64> },

    #[error("iterate {iteration} left the interior regime at x = {x:?}")]
    IterateLeftRegime { iteration: usize, x: Vec<f64> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than by the
    /// mathematical regime of the problem.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedFile { .. }
                | Error::BadProbabilities(_)
                | Error::BadParameter(_)
                | Error::BadAlpha(_)
                | Error::DimensionMismatch { .. }
                | Error::NonFinite { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
