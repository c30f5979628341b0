use thiserror::Error;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("grid too coarse: {0} nodes (minimum 16)")]
    GridTooCoarse(usize),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("torsion/winding data incompatible with the diagonal ansatz: {0}")]
    Incompatible(String),
    #[error("flow kind mismatch: {0}")]
    KindMismatch(String),
    #[error("flat point: AC scale is zero")]
    FlatPoint,
    #[error("eigen iteration did not converge after {iterations} steps (residual {residual:e})")]
    EigenNoConvergence { iterations: usize, residual: f64 },
    #[error("minimization diverged: {0}")]
    Divergence(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("outside oracle domain: {0}")]
    OracleDomain(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FlowError>;
