use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    /// Validation of a constructed object failed.
    #[error("validation error: {0}")]
    Validation(String),

    /// The Gaussian/sub-exponential crossing equation has no root for these
    /// parameters (gamma too small relative to dim_a / lambda).
    #[error("no phase transition: gamma={gamma} too small relative to dim_a/lambda={ratio}")]
    NoPhaseTransition { gamma: f64, ratio: f64 },

    /// The lower-tail alpha condition failed; reports the minimal admissible value.
    #[error("alpha={alpha} too small for tensor lower tail; condition needs alpha*sqrt((1-alpha)/(1-2alpha)) >= {required}")]
    AlphaTooSmall { alpha: f64, required: f64 },

    /// Newton failed to reach the gradient tolerance within the iteration cap.
    #[error("solver did not converge: final gradient norm {grad_norm} after {iters} iterations")]
    NonConverged { grad_norm: f64, iters: usize },

    /// The parameter left the open domain of the model (e.g. non-SPD precision
    /// matrix, infinite log-partition integral).
    #[error("domain exit: {0}")]
    DomainExit(String),

    /// Invalid or empty data supplied to a fit.
    #[error("invalid data: {0}")]
    DomainEmpty(String),

    /// The model does not provide the requested derivative contraction.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A singular operator where an inverse was required.
    #[error("singular operator in {0}")]
    Singular(&'static str),

    /// Configuration parse/validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { op, msg: msg.into() }
    }
}
