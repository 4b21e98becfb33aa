use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid error: {0}")]
    Grid(String),
    #[error("profile error: {0}")]
    Profile(String),
    #[error("curve error: {0}")]
    Curve(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Learn(String),
    #[error("analysis error: {0}")]
    Analysis(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
