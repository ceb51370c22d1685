use thiserror::Error;

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("ascent failed: none of {starts} starts converged")]
    AscentFailed { starts: usize },
    #[error("C = {given} is not admissible; C must exceed {minimal}")]
    InadmissibleC { given: f64, minimal: f64 },
    #[error("alpha = {given} too small (comass {comass} at node {node:?}); minimal admissible alpha is {minimal}")]
    AlphaTooSmall {
        given: f64,
        minimal: f64,
        node: Vec<usize>,
        comass: f64,
    },
    #[error("nearest-point projection failed at node {node:?}: {reason}")]
    Projection { node: Vec<usize>, reason: String },
    #[error("loop closure residual {residual:e} exceeds tolerance {tolerance:e}")]
    LoopClosure { residual: f64, tolerance: f64 },
    #[error("tubes overlap: {0}")]
    TubeOverlap(String),
    #[error("curve is not embedded: {0}")]
    NotEmbedded(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CalibError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(CalibError::InvalidArgument(msg.into()))
}
