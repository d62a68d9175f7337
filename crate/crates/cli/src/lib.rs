//! Experiment runner for `liouville-core`: configuration, named experiments
//! and the CSV/JSONL ledger they write.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiments;
pub mod report;

use std::path::Path;

pub use config::{Experiment, ExperimentConfig, Thresholds};
pub use error::{CliError, Result};
pub use report::{Record, Report, Verdict};

/// Runs `config` and writes its artifacts under `dir`.
pub fn run_to_dir(config: &ExperimentConfig, dir: &Path) -> Result<(Report, report::Artifacts)> {
    let rep = experiments::run(config)?;
    let artifacts = report::write_artifacts(&rep, config, dir)?;
    Ok((rep, artifacts))
}
