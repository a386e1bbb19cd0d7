use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("integration diverged at t = {time}: non-finite state")]
    Divergence { time: f64 },

    /// No winding class reached the gradient tolerance. Carries the best
    /// attempt so callers can still inspect it.
    #[error("boundary value problem did not converge (best grad norm {grad_norm:.3e}, value {value})")]
    Convergence {
        value: f64,
        grad_norm: f64,
        best: Option<Box<crate::action::CostResult>>,
    },

    #[error("cost entry ({row}, {col}) failed: {source}")]
    CostEntry {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("transport pair ({source_atom} -> {target_atom}) failed: {source}")]
    Pair {
        source_atom: usize,
        target_atom: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("measures are unbalanced: total masses {0} and {1}")]
    Imbalance(f64, f64),

    #[error("linear program failed: {0}")]
    Solver(String),

    #[error("missing dependency: {0}")]
    Dependency(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True when the root cause is a failed boundary value problem.
    pub fn is_convergence(&self) -> bool {
        match self {
            Error::Convergence { .. } => true,
            Error::CostEntry { source, .. } | Error::Pair { source, .. } => source.is_convergence(),
            _ => false,
        }
    }
}
