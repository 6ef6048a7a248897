use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Rejected input: mesh sizes, coefficient signs, step sizes, shapes.
    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("linear solve failed at row {row}: pivot {pivot:e}")]
    LinearSolve { row: usize, pivot: f64 },

    #[error("eigensolver did not converge (max residual {residual:e})")]
    Eigen { residual: f64 },

    #[error(
        "pullback iteration did not converge within T = {max_t}: \
         last increment {increment:e}, contraction factor {contraction:.6}"
    )]
    NoConvergence {
        max_t: usize,
        increment: f64,
        contraction: f64,
    },

    #[error("degenerate scenario: {0}")]
    Degenerate(String),

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("step budget exceeded: {steps} steps requested, at most {max} allowed")]
    StepBudget { steps: usize, max: usize },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    /// Configuration-type failures, as opposed to numerical ones.
    pub fn is_invalid_input(&self) -> bool {
        matches!(self, Error::Invalid { .. })
    }
}
