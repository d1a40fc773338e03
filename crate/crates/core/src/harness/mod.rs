//! Configuration, run-matrix orchestration, persistence and reports.
//!
//! Every run writes `runs/<condition>/<family>/<seed>/` under the output
//! root; `record.json` is written last and carries the configuration hash
//! used to skip finished runs on a rerun.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod config;
pub mod matrix;
pub mod persist;
pub mod report;

pub use config::{load_config, parse_config, ConfigFile, ExperimentConfig, ProbeSettings, TrainSettings, OUTPUT_ENV};
pub use matrix::{execute_run, plan_runs, probe_model, run_matrix, MatrixOutcome, RunPlan};
pub use persist::{run_dir, OutcomeInformation, ProbeSummary, RunRecord, RunStatus};
pub use report::{emit_report, MiRow, Report, REPORT_DIR};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("override {0:?} is not of the form key=value")]
    Override(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), source }
    }
}
