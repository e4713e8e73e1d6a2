//! Filesystem, report rendering, sweep orchestration, and the CLI for the
//! FFN placement laboratory. All numerics live in `ffnlab-core`; this crate
//! moves bytes, renders tables and plots, and wires the workflow together:
//! plan, train (sweep), eval, analyze.

pub mod cli;
pub mod corpus;
pub mod plot;
pub mod report;
pub mod runner;
pub mod store;
pub mod tasks;

use ffnlab_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0}")]
    Core(#[from] CoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("run aborted: {0}")]
    Aborted(String),
}

impl LabError {
    /// CLI exit code: 2 for configuration/input problems, 3 for runtime
    /// aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) | LabError::Json(_) => 2,
            LabError::Core(
                CoreError::Config(_)
                | CoreError::Contract(_)
                | CoreError::Format(_)
                | CoreError::Checksum { .. }
                | CoreError::Index { .. }
                | CoreError::MissingCells(_),
            ) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
