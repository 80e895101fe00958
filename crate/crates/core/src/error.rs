use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse failure: {0}")]
    ConfigParse(String),

    #[error("invariant violation: {field}: {message}")]
    Invariant { field: &'static str, message: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("ill-posed bound: condition number {condition:.3e} exceeds {limit:.1e}")]
    IllPosedBound { condition: f64, limit: f64 },

    #[error("singular information matrix: {0}")]
    SingularFim(String),

    #[error("solver failure ({status}): {message}")]
    Solver { status: &'static str, message: String },

    #[error("problem infeasible: {0}")]
    Infeasible(String),

    #[error("rank-one extraction failure: eigenvalue ratio {ratio:.3e} >= {limit:.1e}")]
    RankOneExtraction { ratio: f64, limit: f64 },

    #[error("covariance decomposition infeasible: rank {rank} exceeds {slots} slots")]
    DecompositionInfeasible { rank: usize, slots: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("monotonicity violation in convergence trace at iteration {iteration}")]
    MonotonicityViolation { iteration: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
