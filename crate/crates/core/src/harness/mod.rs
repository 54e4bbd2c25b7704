//! Command surface: conversion, evaluation, fixtures, validation, stats.
//!
//! Errors split into configuration problems and data problems; the CLI
//! maps them to exit codes 2 and 1.

use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

mod config;
mod convert;
mod eval;
mod fixture;
mod report;
mod stats;

pub use config::{load_config, LoadedConfig, SourceSpec};
pub use convert::{run_convert, sidecar_path, ConvertOptions, ConvertSidecar};
pub use eval::{run_eval, write_oracle_predictions, EvalOptions, PredictionRecord};
pub use fixture::{make_fixture, FixtureManifest};
pub use report::{render_report, Manifest, MetricReport, ReportFormat, ReportRow, Totals};
pub use stats::{dataset_stats, validate_file, DatasetStats, ValidationSummary};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl HarnessError {
    /// Process exit code: 2 for configuration errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: &Path, source: io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<crate::ingest::IngestError> for HarnessError {
    fn from(e: crate::ingest::IngestError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

impl From<crate::schema::SchemaError> for HarnessError {
    fn from(e: crate::schema::SchemaError) -> Self {
        HarnessError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Selects source datasets by name. An empty include list admits all.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetFilter {
    pub include: BTreeSet<String>,
    pub exclude: BTreeSet<String>,
}

impl DatasetFilter {
    pub fn allows(&self, dataset: &str) -> bool {
        (self.include.is_empty() || self.include.contains(dataset)) && !self.exclude.contains(dataset)
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
