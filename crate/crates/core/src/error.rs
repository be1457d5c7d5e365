use thiserror::Error;

/// Errors raised by model construction, the Riccati solver, the simulator
/// and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("point {0:?} lies outside the state space")]
    OutsideStateSpace(Vec<f64>),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model failed validation: {0}")]
    InvalidModel(String),
    #[error("matrix is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("Riccati solution blows up at t* = {t_star}")]
    BlowUp { t_star: f64 },
    #[error("Riccati solution leaves the bounded-exponential set at t* = {t_star}")]
    LeftU { t_star: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BlowUp { .. }
            | Error::LeftU { .. }
            | Error::Singular(_)
            | Error::Numerical(_) => 2,
            Error::Io(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
