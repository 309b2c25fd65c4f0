//! Operator surface: `run` a method over a dataset, `compare` result sets,
//! `analyze` persisted traces.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml      resolved configuration snapshot
//! results.jsonl    one scored (record, seed) cell per line
//! summary.json     per-dataset means, standard errors, per-seed means
//! timings.json     wall-clock times (the only non-reproducible file)
//! traces/          one JSONL trace per (record, seed)
//! ```

pub mod analyze;
pub mod compare;
pub mod config;
pub mod run;

use thiserror::Error;

pub use analyze::{cmd_analyze, AnalysisReport, AnalyzeOptions};
pub use compare::{cmd_compare, Comparison};
pub use config::RunConfig;
pub use run::{cmd_run, run_config, RunOutcome};

pub const TOOL_NAME: &str = "agent-forest";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("provider error: {0}")]
    Provider(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("result sets share no record ids")]
    NoOverlap,
    #[error("{0}")]
    EmptyInput(String),
    #[error("{} audit violation(s):\n{}", .0.len(), .0.join("\n"))]
    AuditFailure(Vec<String>),
}

impl CliError {
    /// 1 for configuration and input problems, 2 for provider failures,
    /// 3 when traces fail their audits.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Provider(_) => 2,
            CliError::AuditFailure(_) => 3,
            _ => 1,
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}
