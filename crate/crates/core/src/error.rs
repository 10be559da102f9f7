use thiserror::Error;

pub type Result<T> = std::result::Result<T, RateError>;

/// Coarse failure category, used by the command-line driver to pick an exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters or flags.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// A factorization or numerical routine failed.
    Numerical,
}

#[derive(Debug, Error)]
pub enum RateError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("column {column} ({id}) is constant after {attempts} draws")]
    DegenerateColumn {
        column: usize,
        id: String,
        attempts: usize,
    },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("factorization of {what} failed (tau2 = {tau2:e}, condition estimate = {condition:e})")]
    Factorization {
        what: &'static str,
        tau2: f64,
        condition: f64,
    },

    #[error("{what} did not converge")]
    NoConvergence { what: &'static str },

    #[error("non-finite value in {what} ({detail})")]
    NonFinite { what: &'static str, detail: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("cannot access {path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<RateError>,
    },
}

impl RateError {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        RateError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Tags the error with the pipeline stage that raised it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        RateError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            RateError::Stage { source, .. } => source.kind(),
            RateError::InvalidParameter { .. } => ErrorKind::Usage,
            RateError::DimensionMismatch { .. }
            | RateError::DegenerateColumn { .. }
            | RateError::DegenerateDesign(_)
            | RateError::Parse { .. }
            | RateError::File { .. }
            | RateError::Io(_) => ErrorKind::Data,
            RateError::Factorization { .. }
            | RateError::NoConvergence { .. }
            | RateError::NonFinite { .. } => ErrorKind::Numerical,
        }
    }
}
