use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("symmetric eigensolver did not converge after {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("saddle-point system is singular at elimination step {step}")]
    SingularSystem { step: usize },

    #[error("dimension mismatch: {context} (expected {expected}, found {found})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("operator is not spectrally equivalent on the box: alpha = {alpha:e}")]
    NotSpectrallyEquivalent { alpha: f64 },

    #[error("no eigenvalue of the average pencil lies below {rho_lambda:e}")]
    EmptyBasis { rho_lambda: f64 },

    #[error("eigenvalue {eigenvalue:e} is too close to the sampling endpoint {rho_lambda:e}")]
    BoundaryEigenvalue { eigenvalue: f64, rho_lambda: f64 },

    #[error("mesh domain does not match the problem: {0}")]
    DomainMismatch(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("not an eigenpair: relative residual {residual:e}")]
    NotAnEigenpair { residual: f64 },

    #[error("index set is empty for epsilon = {epsilon}")]
    EmptySet { epsilon: f64 },

    #[error("missing sample for sigma node {sigma} and t node {t}")]
    MissingSample { sigma: usize, t: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("matrix is not symmetric: max asymmetry {asymmetry:e}")]
    NotSymmetric { asymmetry: f64 },

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
