use thiserror::Error;

use crate::mesh::SimError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid matrix view: {0}")]
    InvalidView(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("simulation fault: {0}")]
    Sim(#[from] SimError),

    #[error("device fault: invalid command value {0}")]
    InvalidCommand(u32),

    #[error("device busy: control block written while a task is in flight")]
    DeviceBusy,

    #[error("kernel configuration: {0}")]
    KernelConfig(String),

    #[error("config file line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("service: {0}")]
    Service(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
