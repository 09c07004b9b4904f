//! Scenario runner and its file formats.

pub mod config;
pub mod map_io;
pub mod metrics;
pub mod runner;
pub mod stack;

use thiserror::Error;

pub use config::ScenarioConfig;
pub use map_io::{load_map, save_map, MapMeta};
pub use metrics::{emit_report, MetricsLogger, MetricsRow, RunReport, WaypointOutcome, WaypointStatus, CSV_HEADER};
pub use runner::{run_scenario, run_with_map, RunOptions, RunOutput, TraceRow};
pub use stack::{NavStack, SERVER_ORDER};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("map parse error: {0}")]
    MapParse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("lifecycle error: {0}")]
    Lifecycle(String),
}

impl AppError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::MapParse(_) | AppError::Io(_) => 2,
            AppError::Lifecycle(_) => 1,
        }
    }
}
