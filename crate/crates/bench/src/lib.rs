//! Monte-Carlo symbol-error-rate sweeps and the diagnostic suite behind the
//! `turbocs` command-line tool.

pub mod config;
pub mod emit;
pub mod stats;
pub mod sweep;
pub mod verify;

pub use config::SweepConfig;
pub use sweep::{run_sweep, Cell, SweepResult};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] turbocs_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
