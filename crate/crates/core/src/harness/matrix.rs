use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::persist::{
    read_record, run_dir, write_atomic, write_json, OutcomeInformation, ProbeSummary, RunRecord, RunStatus, CHECKPOINT_FILE,
    CONFIG_FILE, CURVE_FILE, METRICS_FILE, PROBE_FILE, RECORD_FILE,
};
use super::HarnessError;
use crate::gridworld::{Condition, Context, Env};
use crate::infoprobe::{collect_states, counterfactual_policy, mean_information, Labels, ProbeError};
use crate::models::{stream_rng, Model, ModelFamily, Stream};
use crate::training::train_run;

/// One cell of the run matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunPlan {
    pub condition: Condition,
    pub family: ModelFamily,
    pub seed: u64,
}

impl RunPlan {
    pub fn label(&self) -> String {
        format!("{}/{}/{}", self.condition, self.family.label(), self.seed)
    }
}

/// Condition-major, then family, then seed.
pub fn plan_runs(cfg: &ExperimentConfig) -> Vec<RunPlan> {
    let mut plans = Vec::with_capacity(cfg.run_count());
    for &condition in &cfg.conditions {
        for &family in &cfg.families {
            for &seed in &cfg.file.seeds {
                plans.push(RunPlan { condition, family, seed });
            }
        }
    }
    plans
}

/// Counterfactual information of a trained model on phase-1 states drawn
/// from its own stochastic policy.
pub fn probe_model(cfg: &ExperimentConfig, env: &Env, model: &Model, seed: u64) -> Result<ProbeSummary, ProbeError> {
    let p = &cfg.file.probe;
    let prior = p.prior();
    let records = collect_states(env, model, p.n, p.n, &mut stream_rng(seed, Stream::Probe))?;
    let outcomes = p
        .outcomes
        .iter()
        .map(|&outcome| OutcomeInformation {
            outcome,
            bits: mean_information(model, env.maze(), &records, outcome, prior, Labels::Counterfactual),
            bits_factual_labels: mean_information(model, env.maze(), &records, outcome, prior, Labels::Factual),
        })
        .collect();
    let max_policy_gap = records
        .iter()
        .map(|r| {
            let [a, b] = Context::ALL.map(|c| counterfactual_policy(model, r, c));
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    Ok(ProbeSummary { records: records.len(), episodes_limit: p.n, prior: p.prior, outcomes, max_policy_gap })
}

struct RunStats {
    env_steps: u64,
    episodes: u64,
    updates: u64,
}

fn train_and_probe(cfg: &ExperimentConfig, plan: &RunPlan, dir: &Path) -> Result<RunStats, String> {
    let tc = cfg.train_config(plan.condition, plan.family, plan.seed);
    write_json(&dir.join(CONFIG_FILE), &tc).map_err(|e| e.to_string())?;
    let out = train_run(&tc, &cfg.maze).map_err(|e| format!("training: {e}"))?;
    write_atomic(&dir.join(CHECKPOINT_FILE), out.model.to_checkpoint(plan.seed).to_json().as_bytes()).map_err(|e| e.to_string())?;
    write_atomic(&dir.join(CURVE_FILE), out.curve.to_csv().as_bytes()).map_err(|e| e.to_string())?;
    write_json(&dir.join(METRICS_FILE), &out.final_metrics).map_err(|e| e.to_string())?;
    let env = Env::new(cfg.maze.clone(), plan.condition, cfg.file.env).map_err(|e| e.to_string())?;
    let probe = probe_model(cfg, &env, &out.model, plan.seed).map_err(|e| format!("probe: {e}"))?;
    write_json(&dir.join(PROBE_FILE), &probe).map_err(|e| e.to_string())?;
    Ok(RunStats { env_steps: out.env_steps, episodes: out.episodes, updates: out.updates })
}

/// Trains, evaluates and probes one run, writing its directory. Failures are
/// captured in the returned record rather than propagated.
pub fn execute_run(cfg: &ExperimentConfig, root: &Path, plan: &RunPlan) -> RunRecord {
    let started = Instant::now();
    let label = plan.family.label();
    let dir = run_dir(root, plan.condition, &label, plan.seed);
    let result = fs::create_dir_all(&dir).map_err(|e| format!("{}: {e}", dir.display())).and_then(|_| train_and_probe(cfg, plan, &dir));
    let (status, error, stats) = match result {
        Ok(stats) => (RunStatus::Ok, None, stats),
        Err(e) => (RunStatus::Failed, Some(e), RunStats { env_steps: 0, episodes: 0, updates: 0 }),
    };
    let files = if status == RunStatus::Ok {
        [CONFIG_FILE, CHECKPOINT_FILE, CURVE_FILE, METRICS_FILE, PROBE_FILE].map(String::from).to_vec()
    } else {
        Vec::new()
    };
    let record = RunRecord {
        condition: plan.condition,
        family: label,
        seed: plan.seed,
        status,
        error,
        config_hash: cfg.run_hash(plan.condition, plan.family, plan.seed),
        files,
        env_steps: stats.env_steps,
        episodes: stats.episodes,
        updates: stats.updates,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = write_json(&dir.join(RECORD_FILE), &record) {
        eprintln!("warning: could not write record for {}: {e}", plan.label());
    }
    record
}

/// A finished run whose record matches the current configuration.
pub fn completed_record(cfg: &ExperimentConfig, root: &Path, plan: &RunPlan) -> Option<RunRecord> {
    let rec = read_record(&run_dir(root, plan.condition, &plan.family.label(), plan.seed)).ok()?;
    (rec.is_ok() && rec.config_hash == cfg.run_hash(plan.condition, plan.family, plan.seed)).then_some(rec)
}

#[derive(Debug, Clone)]
pub struct MatrixOutcome {
    pub records: Vec<RunRecord>,
    pub executed: usize,
    pub skipped: usize,
}

/// Runs every missing cell of the matrix on `workers` threads. Runs whose
/// record already matches the configuration hash are kept as they are.
pub fn run_matrix(cfg: &ExperimentConfig, root: &Path, verbose: bool) -> Result<MatrixOutcome, HarnessError> {
    fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
    write_json(&root.join("matrix.json"), &cfg.file)?;
    let plans = plan_runs(cfg);
    let total = plans.len();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.file.workers)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let results: Vec<(RunRecord, bool)> = pool.install(|| {
        plans
            .par_iter()
            .enumerate()
            .map(|(i, plan)| {
                if let Some(rec) = completed_record(cfg, root, plan) {
                    return (rec, false);
                }
                let rec = execute_run(cfg, root, plan);
                if verbose {
                    let outcome = match &rec.error {
                        None => "ok".to_string(),
                        Some(e) => format!("FAILED: {e}"),
                    };
                    eprintln!("[{}/{total}] {} {outcome} ({:.1}s)", i + 1, plan.label(), rec.wall_clock_secs);
                }
                (rec, true)
            })
            .collect()
    });
    let executed = results.iter().filter(|(_, ran)| *ran).count();
    Ok(MatrixOutcome { skipped: total - executed, executed, records: results.into_iter().map(|(r, _)| r).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn tiny() -> ExperimentConfig {
        let text = "families = [\"L\", \"M8\"]\nconditions = [\"AB25\"]\nseeds = [0, 1]\n[train]\ntotal_env_steps = 300\neval_interval = 100\n[probe]\nn = 20\n";
        parse_config(text, &[], Path::new(".")).unwrap()
    }

    #[test]
    fn plan_order_and_size() {
        let cfg = tiny();
        let plans = plan_runs(&cfg);
        assert_eq!(plans.len(), 4);
        assert_eq!(plans[1].label(), "AB25/L/1");
        assert_eq!(plans[2].label(), "AB25/M8/0");
    }

    #[test]
    fn matrix_resumes_only_missing_runs() {
        let cfg = tiny();
        let tmp = tempfile::tempdir().unwrap();
        let first = run_matrix(&cfg, tmp.path(), false).unwrap();
        assert_eq!((first.executed, first.skipped), (4, 0));
        assert!(first.records.iter().all(RunRecord::is_ok));
        let dir = run_dir(tmp.path(), Condition::AB25, "M8", 1);
        for f in [CONFIG_FILE, CHECKPOINT_FILE, CURVE_FILE, METRICS_FILE, PROBE_FILE, RECORD_FILE] {
            assert!(dir.join(f).is_file(), "{f}");
        }

        fs::remove_file(dir.join(RECORD_FILE)).unwrap();
        let second = run_matrix(&cfg, tmp.path(), false).unwrap();
        assert_eq!((second.executed, second.skipped), (1, 3));

        // a changed configuration invalidates every stored run
        let mut changed = cfg.clone();
        changed.file.train.gamma = 0.95;
        let third = run_matrix(&changed, tmp.path(), false).unwrap();
        assert_eq!(third.executed, 4);
    }

    #[test]
    fn probe_summary_is_bounded_and_m_is_blind() {
        let cfg = tiny();
        let env = Env::new(cfg.maze.clone(), Condition::AB25, cfg.file.env).unwrap();
        let model = Model::init(cfg.families[1], 0).unwrap();
        let s = probe_model(&cfg, &env, &model, 0).unwrap();
        assert_eq!(s.records, 20);
        assert_eq!(s.max_policy_gap, 0.0);
        for o in &s.outcomes {
            assert!((0.0..=1.0).contains(&o.bits));
            assert_eq!(o.bits_factual_labels, 0.0);
        }
    }
}
