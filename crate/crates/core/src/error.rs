use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid kinematic tree at joint {joint} ({name}): {reason}")]
    InvalidTree {
        joint: usize,
        name: String,
        reason: String,
    },

    #[error("{what}: expected {expected} entries, found {found}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rotation {index} is not in SO(3) (orthonormality error {error:.3e}, det {det})")]
    InvalidRotation { index: usize, error: f64, det: f64 },

    #[error("axis is not unit length (norm {norm})")]
    NonUnitAxis { norm: f64 },

    #[error("sin/cos pair is not on the unit circle (sin^2 + cos^2 = {value})")]
    InvalidAngle { value: f64 },

    #[error("zero-length vector: {what}")]
    ZeroLength { what: String },

    #[error("coincident joints: target bone ending at joint {joint} ({name}) has zero length")]
    DegenerateBone { joint: usize, name: String },

    #[error("points at or behind the camera plane: {indices:?}")]
    BehindCamera { indices: Vec<usize> },

    #[error("degenerate depth: {0}")]
    DegenerateDepth(String),

    #[error("unknown clothing category `{0}`")]
    UnknownCategory(String),

    #[error("unknown measurement `{0}`")]
    UnknownMeasurement(String),

    #[error("vertex budget {budget} too small: need at least {required}")]
    BudgetTooSmall { budget: usize, required: usize },

    #[error("rank-deficient measurement design; null directions: {null_directions:?}")]
    RankDeficient { null_directions: Vec<Vec<f64>> },

    #[error("covariance is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("pose database is empty")]
    EmptyDatabase,

    #[error("cloth mask covers no joints")]
    EmptyMask,

    #[error("degenerate alignment: {0}")]
    DegenerateAlignment(String),

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty mesh")]
    EmptyMesh,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by numerically degenerate data rather than malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBone { .. }
                | Error::BehindCamera { .. }
                | Error::DegenerateDepth(_)
                | Error::RankDeficient { .. }
                | Error::NotPsd { .. }
                | Error::DegenerateAlignment(_)
                | Error::ZeroLength { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
