use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {t} lies outside [{lower}, {upper}]")]
    OutOfDomain { t: f64, lower: f64, upper: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    /// `I - A2` could not be factorized: the grid does not resolve the fixed point.
    #[error("discretization too coarse: I - A2 is numerically singular (pivot ratio {pivot_ratio:e})")]
    TooCoarse { pivot_ratio: f64 },

    #[error("discretization of dimension {size} exceeds the limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("smoothness breakpoint {0} is not a mesh breakpoint")]
    MissingBreakpoint(f64),

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("problem `{0}` provides no derivative callbacks")]
    MissingDerivative(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular Jacobian at iteration {iteration}: try a better initial guess or phase reference")]
    SingularJacobian { iteration: usize },

    /// Newton converged, but to a constant solution although the guess oscillated.
    #[error("iteration collapsed onto an equilibrium after {iterations} iterations")]
    Collapsed { iterations: usize },

    #[error("index {index} out of range (length {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::TooCoarse { .. }
                | Error::Eigen(_)
                | Error::NoConvergence { .. }
                | Error::SingularJacobian { .. }
                | Error::Collapsed { .. }
        )
    }
}
