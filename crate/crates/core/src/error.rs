use thiserror::Error;

/// Errors produced by the library.
///
/// The variants split into two families: input validation problems (bad
/// matrices, bad parameters, empty regions) and numeric failures (solver
/// non-convergence, sampling exhaustion, blow-up). [`QrError::is_numeric`]
/// tells them apart, which the command-line front end maps to exit codes.
#[derive(Clone, Debug, Error)]
pub enum QrError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not Hermitian (max |A - A^H| = {0:e})")]
    NotHermitian(f64),

    #[error("matrix is not unitary (max |U^H U - I| = {0:e})")]
    NotUnitary(f64),

    #[error("operator is not a projection (max |P^2 - P| = {0:e})")]
    NotProjection(f64),

    #[error("invalid density state: {0}")]
    InvalidState(String),

    #[error("invalid ball radius {0}")]
    InvalidRadius(f64),

    #[error("condition is empty")]
    EmptyCondition,

    #[error("extents do not intersect; the section would be empty")]
    EmptySection,

    #[error("state lies outside the extent of the qr-number")]
    ExtentViolation,

    #[error("{function} is undefined at {argument}")]
    Domain { function: &'static str, argument: f64 },

    #[error("no eigenvalue of the operator differs from the current value {0}")]
    NoPerturbation(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("eigensolver did not converge within {iterations} iterations (dim {dim})")]
    NoConvergence { dim: usize, iterations: usize },

    #[error("sampler gave up after {attempts} attempts ({accepted} accepted, rate {rate:.3})")]
    SamplingExhausted {
        attempts: usize,
        accepted: usize,
        rate: f64,
    },

    #[error("non-finite value during integration at t = {0}")]
    BlowUp(f64),

    #[error("truth values belong to different posets")]
    PosetMismatch,

    #[error("malformed input: {0}")]
    Format(String),
}

impl QrError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            QrError::NoConvergence { .. } | QrError::SamplingExhausted { .. } | QrError::BlowUp(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, QrError>;
