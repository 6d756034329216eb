use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("degenerate problem: {0}")]
    Degenerate(String),
    #[error("weight matrix of client {client} is not symmetric positive-definite")]
    NotSpd { client: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("empty schedule in round {round}")]
    EmptySchedule { round: u64 },
    #[error("eigen-analysis: {0}")]
    Eigen(String),
    #[error("mean-square unstable: sub-unit eigenvalue with modulus {0}")]
    Unstable(f64),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
