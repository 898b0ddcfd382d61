use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("shift {lambda} must exceed {bound}")]
    InvalidShift { lambda: f64, bound: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("trace map is rank deficient (smallest singular value {sigma_min:.3e})")]
    RankDeficient { sigma_min: f64 },

    #[error("unsupported relation: {0}")]
    UnsupportedRelation(String),

    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    Tolerance { iterations: usize, residual: f64 },

    #[error("pair is not in the relation (inclusion residual {residual:.3e})")]
    InconsistentPair { residual: f64 },

    #[error("internal inconsistency: {0}")]
    Internal(String),

    #[error("step size {h} too large: h·λ° = {product} must stay below 1")]
    StepSize { h: f64, product: f64 },

    #[error("invalid point configuration: {0}")]
    InvalidPoints(String),

    #[error("evaluation point coincides with a singular point")]
    SingularPoint,

    #[error("exponent {exponent} collides with the resolvent parameter")]
    ExponentCollision { exponent: f64 },

    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    InvalidScenario(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
