use num_complex::Complex64;
use thiserror::Error;

/// Every fallible operation in the crate reports one of these.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("weight {name}[{index}] = {value} is not strictly positive")]
    NonPositiveWeight { name: &'static str, index: usize, value: f64 },

    #[error("product of alphas / product of betas = {ratio}, expected 1")]
    ProductConstraintViolated { ratio: f64 },

    #[error("diamond size must be positive")]
    ZeroSize,

    #[error("invalid edge or vertex: {0}")]
    InvalidEdge(String),

    #[error("pole of a transfer matrix at z = {z}")]
    PoleAtZ { z: Complex64 },

    #[error("root finding failed: residual {residual:e}")]
    RootFindingFailed { residual: f64 },

    #[error("{quantity}: closed form {closed} disagrees with derivative form {derivative}")]
    CrossCheckFailed { quantity: &'static str, closed: f64, derivative: f64 },

    #[error("point is not on the spectral curve (residual {residual:e})")]
    NotOnCurve { residual: f64 },

    #[error("division by 2w - tr(Phi) at a branch point")]
    BranchPointDivision,

    #[error("z = {z} is a branch point")]
    BranchPoint { z: Complex64 },

    #[error("continuation became ambiguous near z = {z}")]
    AmbiguousContinuation { z: Complex64 },

    #[error("spectral curve has degenerate genus (coinciding branch points)")]
    GenusDegenerate,

    #[error("contour infeasible: {0}")]
    ContourInfeasible(String),

    #[error("size {size} exceeds cap {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("Kasteleyn matrix is singular")]
    SingularMatrix,

    #[error("linear solver failed: {0}")]
    SolverFailure(String),

    #[error("quadrature not converged: value {value}, error estimate {error:e}")]
    QuadratureNotConverged { value: Complex64, error: f64 },

    #[error("contour not certified: {0}")]
    ContourNotCertified(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("malformed cover: {0}")]
    MalformedCover(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of a numerical procedure rather than of the input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::RootFindingFailed { .. }
                | Error::CrossCheckFailed { .. }
                | Error::AmbiguousContinuation { .. }
                | Error::ContourInfeasible(_)
                | Error::SingularMatrix
                | Error::SolverFailure(_)
                | Error::QuadratureNotConverged { .. }
                | Error::ContourNotCertified(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
