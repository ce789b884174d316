use thiserror::Error;

use crate::domain::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {field}: expected {expected}, got {actual}")]
    Dimension {
        field: String,
        expected: String,
        actual: String,
    },

    #[error("{what} is not positive definite")]
    NotPositiveDefinite { what: &'static str },

    #[error("{what} is indefinite (pivot {pivot:e})")]
    Indefinite { what: &'static str, pivot: f64 },

    #[error("degenerate market: market volatility must be positive, got {sigma_m}")]
    DegenerateMarket { sigma_m: f64 },

    #[error("no real equilibrium: discriminant {discriminant:e} is negative")]
    NoRealEquilibrium { discriminant: f64 },

    #[error("jacobian is singular at iteration {iteration} even after regularization")]
    SingularJacobian { iteration: usize },

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("risk cap {sigma_cap} is below the minimum-variance risk {min_risk}")]
    Infeasible { sigma_cap: f64, min_risk: f64 },

    #[error("degenerate allocation direction: {0}")]
    DegenerateDirection(&'static str),

    #[error("missing {0}")]
    Missing(&'static str),

    #[error("scenario failed validation: {0}")]
    Validation(ValidationReport),

    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unknown figure id `{0}`")]
    UnknownFigure(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dimension(field: impl Into<String>, expected: impl ToString, actual: impl ToString) -> Self {
        Error::Dimension {
            field: field.into(),
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Strips stage attribution and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
