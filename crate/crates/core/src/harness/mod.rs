//! Configuration, experiment orchestration, persistence and the CLI.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod formats;
pub mod report;

use thiserror::Error;

pub use config::{load_config, parse_config, ExperimentConfig};
pub use experiment::{run_experiment, RunManifest, RunOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}", format_config_error(path, *line, fields, message))]
    Config {
        path: String,
        line: Option<usize>,
        fields: Vec<String>,
        message: String,
    },
    #[error("configuration rejected (rerun with --force to proceed): {0}")]
    Rejected(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("check failed: {0}")]
    Acceptance(String),
}

fn format_config_error(path: &str, line: Option<usize>, fields: &[String], message: &str) -> String {
    let location = match line {
        Some(l) => format!("{path}:{l}"),
        None => path.to_string(),
    };
    if fields.is_empty() {
        format!("{location}: {message}")
    } else {
        format!("{location}: [{}] {message}", fields.join(", "))
    }
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Usage(_) => EXIT_USAGE,
            HarnessError::Parse { .. }
            | HarnessError::Config { .. }
            | HarnessError::Rejected(_)
            | HarnessError::Io { .. } => EXIT_CONFIG,
            HarnessError::Numeric(_) => EXIT_NUMERIC,
            HarnessError::Acceptance(_) => EXIT_ACCEPTANCE,
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}
