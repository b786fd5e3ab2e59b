use num_complex::Complex64;

/// Every failure the engine reports.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {min_eigenvalue:.3e})")]
    NotPsd { min_eigenvalue: f64 },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("algebra mismatch: expected blocks {expected:?}, found {found:?}")]
    AlgebraMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("element is not compressed by the state supports (residual {residual:.3e})")]
    NotCompressed { residual: f64 },
    #[error("argument outside the strip: Im z = {im}")]
    OutOfStrip { im: f64 },
    #[error("time grids differ")]
    GridMismatch,
    #[error("reference states differ")]
    ReferenceMismatch,
    #[error("functional is not faithful")]
    NotFaithful,
    #[error("evaluation at a pole: z = {z}")]
    PoleHit { z: Complex64 },
    #[error("boundary vector is not square integrable: {0}")]
    NotSquareIntegrable(String),
    #[error("unsupported representation: {0}")]
    UnsupportedForm(String),
    #[error("pole {pole} lies within the margin of the strip boundary")]
    PoleOnBoundary { pole: Complex64 },
    #[error("interpolator is not a Gaussian-decay section")]
    NotInN,
    #[error("function is not integrable on the lambda grid: {0}")]
    NotIntegrable(String),
    #[error("trace diverges for mu = {mu}")]
    DivergentTrace { mu: Complex64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}
