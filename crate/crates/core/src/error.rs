use thiserror::Error;

/// Errors raised by the geometry, estimation, and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("expected a unit vector, got norm {norm}")]
    NotUnit { norm: f64 },

    #[error("expected a strictly positive value, got {0}")]
    NotPositive(f64),

    #[error("matrix is not a rotation (orthogonality defect {defect:e}, det {det})")]
    NotRotation { defect: f64, det: f64 },

    #[error("landmark count mismatch: expected {expected}, found {found}")]
    LandmarkCountMismatch { expected: usize, found: usize },

    #[error("landmark {index} is {distance:e} m from the camera centre")]
    DegenerateConfiguration { index: usize, distance: f64 },

    #[error("flow for landmark {index} is not tangent to its bearing (defect {defect:e})")]
    NotTangent { index: usize, defect: f64 },

    #[error("landmark {index}: {reason}")]
    Lifecycle { index: usize, reason: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
