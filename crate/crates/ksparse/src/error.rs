use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input file.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// Input data violates a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A least-squares or posterior system could not be solved.
    #[error("singular system for support {support}: {context}")]
    SingularSystem { support: String, context: String },

    /// A computation produced a non-finite or otherwise unusable result.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence in {context} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        context: String,
        iterations: usize,
        residual: f64,
        /// Residual history, most recent last.
        trace: Vec<f64>,
    },

    /// The prior-scale fixed point ran away, indicating a likelihood that is
    /// flat in the prior width.
    #[error("flat likelihood: prior-scale iteration diverged (last z = {z_last:.3e})")]
    FlatLikelihood { z_last: f64 },

    /// An exhaustive enumeration would exceed the configured budget.
    #[error("evaluation budget exceeded: {required} supports > cap {cap}; {hint}")]
    BudgetExceeded {
        required: u128,
        cap: u64,
        hint: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable tag for each error class, used by the CLI for
    /// exit codes and error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::SingularSystem { .. } => "singular-system",
            Error::Numeric(_) => "numeric",
            Error::NonConvergence { .. } => "non-convergence",
            Error::FlatLikelihood { .. } => "flat-likelihood",
            Error::BudgetExceeded { .. } => "budget",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
