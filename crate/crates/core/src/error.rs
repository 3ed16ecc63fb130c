use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the numerical pipeline.
///
/// The variants split into two families: bad input ([`Error::is_input_error`])
/// and numerical breakdown (non-convergence, degeneracy, truncation).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("derivative order {0} not supported (max 3)")]
    DerivativeOrder(usize),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("eigenvalues {lower} and {upper} nearly degenerate (gap {gap:e}); basis too small or input pathological")]
    NearDegenerate { lower: usize, upper: usize, gap: f64 },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("no convergence: {0}")]
    NotConverged(String),

    #[error("band {0} is constant in k; extrema undefined")]
    ConstantBand(usize),

    #[error("degenerate extremum of band {band} at k = {k}: refusing non-degenerate analysis")]
    DegenerateExtremum { band: usize, k: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("threshold {threshold:e} below eigensolver noise floor {floor:e}")]
    NoiseFloor { threshold: f64, floor: f64 },

    #[error("truncation error: {0}")]
    Truncation(String),

    #[error("section too coarse: overlap {overlap} between grid points {index} and {next}", next = index + 1)]
    SectionTooCoarse { index: usize, overlap: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// Whether the error stems from caller input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_) | Error::DerivativeOrder(_) | Error::Precondition(_)
        )
    }
}
