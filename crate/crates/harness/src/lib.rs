//! Experiment driver for `wkbsplit`: configuration, sweeps over `(eps, dt)`,
//! local-error and norm studies, CSV/JSON reports and binary field dumps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;

pub mod config;
pub mod dump;
pub mod report;
pub mod runs;

pub use config::{ExperimentConfig, Task};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] wkbsplit::Error),

    #[error("malformed dump: {0}")]
    Dump(String),

    #[error("dump version {found}, expected {expected}")]
    DumpVersion { found: u32, expected: u32 },

    #[error("dump is {found} bytes, expected {expected}")]
    DumpSize { found: usize, expected: usize },

    #[error("dump grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
}
