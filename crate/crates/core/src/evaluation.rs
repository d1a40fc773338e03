//! Greedy evaluation and the success-table aggregation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::gridworld::{Condition, Env};
use crate::harness::persist::{read_json, read_record, METRICS_FILE};
use crate::harness::HarnessError;
use crate::models::Model;
use crate::training::{run_episode, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub phase0_success: bool,
    pub phase1_success: bool,
    pub success_both: bool,
    pub episode_return: f64,
    /// Return with the shaping component removed.
    pub unshaped_return: f64,
    pub wrong_goal_visits: u32,
    pub blocked_moves: u32,
    pub steps: u32,
}

impl EpisodeMetrics {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let s = &traj.final_state;
        let count = |f: fn(&crate::gridworld::StepEvents) -> bool| traj.steps.iter().filter(|r| f(&r.events)).count() as u32;
        let episode_return = traj.episode_return();
        let shaping: f64 = traj.steps.iter().map(|r| r.shaping).sum();
        Self {
            phase0_success: s.phase0_success,
            phase1_success: s.phase1_success,
            success_both: s.phase0_success && s.phase1_success,
            episode_return,
            unshaped_return: episode_return - shaping,
            wrong_goal_visits: count(|e| e.reached_wrong),
            blocked_moves: count(|e| e.blocked),
            steps: traj.len() as u32,
        }
    }

    pub fn wrong_goal_hit(&self) -> bool {
        self.wrong_goal_visits > 0
    }
}

/// One deterministic greedy episode.
pub fn evaluate_greedy(env: &Env, model: &Model) -> EpisodeMetrics {
    EpisodeMetrics::from_trajectory(&run_episode(env, model, None))
}

/// Per-seed outcome. `solved_both` is the final greedy episode's success-both;
/// failed runs count as unsolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub family: String,
    pub condition: Condition,
    pub seed: u64,
    pub metrics: Option<EpisodeMetrics>,
    pub solved_both: bool,
    pub failed: Option<String>,
}

impl SeedSummary {
    pub fn completed(family: &str, condition: Condition, seed: u64, metrics: EpisodeMetrics) -> Self {
        Self {
            family: family.to_string(),
            condition,
            seed,
            solved_both: metrics.success_both,
            metrics: Some(metrics),
            failed: None,
        }
    }

    pub fn failed(family: &str, condition: Condition, seed: u64, reason: impl Into<String>) -> Self {
        Self { family: family.to_string(), condition, seed, metrics: None, solved_both: false, failed: Some(reason.into()) }
    }
}

/// Reads a finished run directory. A missing or unreadable record or
/// metrics file is an error; a run recorded as failed is an unsolved seed.
pub fn summarize_seed(dir: &Path) -> Result<SeedSummary, HarnessError> {
    let rec = read_record(dir)?;
    if !rec.is_ok() {
        let reason = rec.error.unwrap_or_else(|| "failed".into());
        return Ok(SeedSummary::failed(&rec.family, rec.condition, rec.seed, reason));
    }
    let metrics: EpisodeMetrics = read_json(&dir.join(METRICS_FILE))?;
    Ok(SeedSummary::completed(&rec.family, rec.condition, rec.seed, metrics))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    pub family: String,
    pub condition: Condition,
    pub solved: usize,
    pub seeds: usize,
    pub failed_runs: usize,
    pub phase0_rate: f64,
    pub phase1_rate: f64,
    pub mean_return: f64,
    pub mean_unshaped_return: f64,
    /// Fraction of seeds whose greedy episode touched the wrong goal at least once.
    pub wrong_goal_rate: f64,
    pub mean_wrong_goal_visits: f64,
    pub partial: bool,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// One row per (family, condition) that has at least one summary, in the
/// given family and condition order. Rows with fewer than `expected_seeds`
/// summaries are marked partial. Failed runs count in the denominators.
pub fn aggregate_success_table(
    summaries: &[SeedSummary],
    families: &[String],
    conditions: &[Condition],
    expected_seeds: usize,
) -> Vec<SuccessRow> {
    let mut rows = Vec::new();
    for family in families {
        for &condition in conditions {
            let cell: Vec<&SeedSummary> =
                summaries.iter().filter(|s| &s.family == family && s.condition == condition).collect();
            if cell.is_empty() {
                continue;
            }
            let n = cell.len();
            let flag = |f: fn(&crate::evaluation::EpisodeMetrics) -> bool| {
                mean(cell.iter().map(|s| s.metrics.as_ref().map_or(0.0, |m| f64::from(u8::from(f(m))))))
            };
            let done: Vec<&EpisodeMetrics> = cell.iter().filter_map(|s| s.metrics.as_ref()).collect();
            rows.push(SuccessRow {
                family: family.clone(),
                condition,
                solved: cell.iter().filter(|s| s.solved_both).count(),
                seeds: n,
                failed_runs: cell.iter().filter(|s| s.failed.is_some()).count(),
                phase0_rate: flag(|m| m.phase0_success),
                phase1_rate: flag(|m| m.phase1_success),
                mean_return: mean(done.iter().map(|m| m.episode_return)),
                mean_unshaped_return: mean(done.iter().map(|m| m.unshaped_return)),
                wrong_goal_rate: flag(|m| m.wrong_goal_hit()),
                mean_wrong_goal_visits: mean(done.iter().map(|m| f64::from(m.wrong_goal_visits))),
                partial: n < expected_seeds,
            });
        }
    }
    rows
}
