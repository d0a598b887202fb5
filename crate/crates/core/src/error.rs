use thiserror::Error;

/// Library-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("operator is not unitary (deviation {deviation:.3e} > {tolerance:.3e})")]
    NotUnitary { deviation: f64, tolerance: f64 },
    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("eigenvalue {0} outside the function domain [-1, 1]")]
    EigenvalueOutOfRange(f64),
    #[error("qubit count {0} outside supported range {1}")]
    QubitCountOutOfRange(usize, &'static str),
    #[error("instance too large to enumerate: {0}")]
    InstanceTooLarge(String),
    #[error("quadrature failed to converge at {0} panels")]
    QuadratureDivergence(usize),
    #[error("cutoff search exceeded K = {0} without meeting the target")]
    CutoffExceeded(usize),
    #[error("retry limit ({0}) exceeded in correction estimation")]
    RetryLimitExceeded(usize),
    #[error("degenerate value: {0}")]
    Degenerate(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical guard tripped: {0}")]
    NumericalGuard(String),
}

pub type Result<T> = std::result::Result<T, Error>;
