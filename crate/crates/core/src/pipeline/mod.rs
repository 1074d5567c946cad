//! Covariate-shift experiments: dataset loading and splitting, a bank of
//! per-feature trees, and the two-arm (raw vs. quantized) MLP comparison.

use std::path::PathBuf;

use thiserror::Error;

use crate::metrics::MetricsError;
use crate::mlp::MlpError;
use crate::qtree::TreeError;

pub mod bank;
pub mod dataset;
pub mod experiment;

pub use bank::{fit_bank, FeatureBank};
pub use dataset::{
    inject_noise, load_split, split_table, Cut, DataSource, DatasetSpec, Split, SplitRule, Table, Task,
    BUILTIN_DATASETS, NOISE_SD_FLOOR,
};
pub use experiment::{
    run_experiment, run_on_split, run_seed, ArmSummary, ConfigEcho, ExperimentConfig, ExperimentReport, SeedOutcome,
    Standardizer, RAW_ARM, XENOVERT_ARM,
};

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("dataset `{0}` needs a CSV path")]
    MissingCsv(String),
    #[error("unknown dataset `{name}` (valid: {valid})")]
    UnknownDataset { name: String, valid: String },
    #[error("csv: {0}")]
    Csv(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {row}, column `{column}`: cannot parse `{value}`")]
    BadCell { row: usize, column: String, value: String },
    #[error("{side} split is empty")]
    EmptySplit { side: &'static str },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} feature columns, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite feature value {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
