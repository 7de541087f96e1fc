use thiserror::Error;

use crate::calculus::ScalarField;
use crate::space::VertexId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A numeric parameter is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("construction error in `{name}`: {reason}")]
    Construction { name: &'static str, reason: String },

    /// The stencil of a vertex reaches a vertex where the field has no value.
    #[error("field has no value at vertex {0} required by the stencil")]
    MissingValue(VertexId),

    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    /// Carries the best iterate so callers can still inspect it.
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        best: Box<ScalarField>,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn construction(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Construction {
            name,
            reason: reason.into(),
        }
    }
}
