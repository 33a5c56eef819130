use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("point not in cone: dist = {dist:e}")]
    NotInCone { dist: f64 },
    #[error("pair not on the normal-cone graph: residual = {residual:e}")]
    NotOnGraph { residual: f64 },
    #[error("direction outside the critical cone: dist = {dist:e}")]
    NotCritical { dist: f64 },
    #[error("point infeasible: dist(g(x),K)={dist:e}")]
    Infeasible { dist: f64 },
    #[error("not a multiplier: residual = {residual:e}")]
    NotMultiplier { residual: f64 },
    #[error("dimension cap exceeded: {dim} > {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, ConeError>;
