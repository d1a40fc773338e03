use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::gridworld::Condition;
use crate::infoprobe::OutcomeDef;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const PROBE_FILE: &str = "probe.json";
/// Written last; its presence marks a finished run.
pub const RECORD_FILE: &str = "record.json";

/// `runs/<condition>/<family>/<seed>` under `root`.
pub fn run_dir(root: &Path, condition: Condition, family: &str, seed: u64) -> PathBuf {
    root.join("runs").join(condition.to_string()).join(family).join(seed.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub condition: Condition,
    pub family: String,
    pub seed: u64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config_hash: String,
    /// File names relative to the run directory.
    pub files: Vec<String>,
    pub env_steps: u64,
    pub episodes: u64,
    pub updates: u64,
    pub wall_clock_secs: f64,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeInformation {
    pub outcome: OutcomeDef,
    /// Mean counterfactual information in bits.
    pub bits: f64,
    /// Same records with outcome labels frozen to the factual context.
    pub bits_factual_labels: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub records: usize,
    pub episodes_limit: usize,
    pub prior: [f64; 2],
    pub outcomes: Vec<OutcomeInformation>,
    /// Largest `max_a |π_A(a) - π_B(a)|` over the records.
    pub max_policy_gap: f64,
}

impl ProbeSummary {
    pub fn bits(&self, outcome: OutcomeDef) -> Option<&OutcomeInformation> {
        self.outcomes.iter().find(|o| o.outcome == outcome)
    }
}

/// Writes through a temporary file and a rename so readers never see a torn file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| HarnessError::io(&tmp, e))?;
    f.write_all(contents).map_err(|e| HarnessError::io(&tmp, e))?;
    f.sync_all().map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

pub fn read_record(dir: &Path) -> Result<RunRecord, HarnessError> {
    read_json(&dir.join(RECORD_FILE))
}
