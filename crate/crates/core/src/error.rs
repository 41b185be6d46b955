use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A CSV or text input could not be parsed.
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// An input violated a structural precondition.
    #[error("invalid input: {0}")]
    Validation(String),

    /// An operation was applied to data in the wrong state.
    #[error("usage error: {0}")]
    Usage(String),

    /// The data degenerated numerically (zero sample, vanishing quadratic form).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// A fixed-point solver ran out of iterations.
    #[error(
        "fixed-point iteration did not converge within {max_iterations} iterations \
         (last residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    NoConvergence {
        max_iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    /// A numeric routine failed (factorization, root bracketing, out-of-domain).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// File I/O failure, with the offending path.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// An error from a lower-level operation, annotated with context.
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wrap an error with a context line (e.g. the offending rho or window).
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
