use crate::lp::{LpError, SolveStatus};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid instance: {}", .0.join("; "))]
    InvalidInstance(Vec<String>),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A document failed to parse; `path` names the offending field.
    #[error("line {line}, column {column}, at `{path}`: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Model(#[from] LpError),
    /// A subproblem ended without a usable optimum.
    #[error("{context}: solver returned {status:?}")]
    Solver {
        context: String,
        status: SolveStatus,
        /// Objective of the best integral point found, if any.
        incumbent: Option<f64>,
    },
}

impl Error {
    pub(crate) fn solver(context: impl Into<String>, status: SolveStatus) -> Self {
        Self::Solver {
            context: context.into(),
            status,
            incumbent: None,
        }
    }

    /// True when the failure came from an exhausted pivot or node budget.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Self::Solver {
                status: SolveStatus::IterationLimit | SolveStatus::NodeLimit,
                ..
            }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
