use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pattern literal, byte {pos}: {msg}")]
    PatternSyntax { pos: usize, msg: String },

    #[error("grid constraint violated: {0}")]
    GridConstraint(String),

    #[error("window at {base} wraps around the torus (pattern diameter {diameter} >= N = {n})")]
    WrappedWindow { base: String, diameter: u64, n: u32 },

    #[error("target set is not contained in the ambient set")]
    NotContained,

    #[error("point lies outside the interval: {0}")]
    OutOfInterval(String),

    #[error("linear solver stalled: residual {residual:e} after {iterations} iterations")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("unknown experiment kind `{0}`")]
    UnknownKind(String),

    #[error("infeasible ladder: {0}")]
    InfeasibleLadder(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
