use thiserror::Error;

/// Errors raised by mesh construction, frequency-domain solves and the
/// time-stepping drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("argument {value} lies outside the right half-plane")]
    OutsideHalfPlane { value: String },

    #[error("point ({x}, {y}) lies on the boundary (distance {distance:e})")]
    PointOnBoundary { x: f64, y: f64, distance: f64 },

    #[error("singular matrix in {context}")]
    SingularMatrix { context: String },

    #[error("eigenvector basis at contour node {index} is ill-conditioned (condition {condition:e})")]
    IllConditionedEigenbasis { index: usize, condition: f64 },

    #[error("frequency solve at contour node {index} (s = {s}) failed: {source}")]
    FrequencySolve {
        index: usize,
        s: String,
        #[source]
        source: Box<Error>,
    },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
