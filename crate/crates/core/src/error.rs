use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CwError {
    #[error("iterate {n} exceeds horizon {max}")]
    Horizon { n: i64, max: u32 },
    #[error("chart mismatch: {0:?} vs {1:?}")]
    ChartMismatch(crate::models::Chart, crate::models::Chart),
    #[error("calibration: {0}")]
    Calibration(String),
    #[error("vertex budget {budget} exceeded while imaging a continuum")]
    Budget { budget: usize },
    #[error("domain: {0}")]
    Domain(String),
    #[error("point is {distance:e} away from the continuum (tol {tol:e})")]
    OffContinuum { distance: f64, tol: f64 },
    #[error("model fault: {0}")]
    ModelFault(String),
    #[error("indeterminate: {0}")]
    Indeterminate(String),
    #[error("search failed: {0}")]
    SearchFailure(String),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },
}

pub type Result<T> = std::result::Result<T, CwError>;
