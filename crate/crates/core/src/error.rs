use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension {0} outside the supported range {min}..={max}", min = crate::MIN_DIM, max = crate::MAX_DIM)]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("input violates pair symmetry by {0:e}")]
    SymmetryViolation(f64),

    #[error("invalid cone parameters: {0}")]
    InvalidSpec(String),

    #[error("invalid pinching function: {0}")]
    InvalidPinching(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("gauge violation: |Ric0(S)| = {0:e}")]
    GaugeViolation(f64),

    #[error("rejection sampling failed after {0} attempts")]
    SamplerExhausted(usize),

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("reconstruction error {0:e} exceeds tolerance")]
    Reconstruction(f64),

    #[error("malformed serialized data: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
