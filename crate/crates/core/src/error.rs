use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension {0} outside the supported range 2..=8")]
    Dimension(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("signed SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },

    #[error("invalid constraint: {0}")]
    Constraint(String),

    /// Exponent outside `1 < p < d`; no strict superset of the constraint set
    /// can be reached otherwise.
    #[error("exponent p = {p} must satisfy 1 < p < d = {dim}")]
    Exponent { p: f64, dim: usize },

    #[error("invalid laminate request: {0}")]
    Laminate(String),

    /// Internal inconsistency of the splitting calculus (should be unreachable).
    #[error("splitting logic error: {0}")]
    Logic(String),

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("resolution exhausted at laminate depth {depth}: {detail}")]
    ResolutionExhausted { depth: usize, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Validation problems are reported before any compute starts.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension(_)
                | Error::Shape(_)
                | Error::NonFinite(_)
                | Error::Constraint(_)
                | Error::Exponent { .. }
                | Error::Laminate(_)
                | Error::Grid(_)
                | Error::Config(_)
        )
    }
}
