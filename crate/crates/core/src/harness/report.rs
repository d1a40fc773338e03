use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::persist::{read_json, read_record, run_dir, write_atomic, ProbeSummary, RunRecord, CURVE_FILE, PROBE_FILE};
use super::HarnessError;
use crate::evaluation::{aggregate_success_table, summarize_seed, SeedSummary, SuccessRow};
use crate::infoprobe::{aggregate_mi, mean_and_se, MIEstimate};
use crate::training::LearningCurve;

pub const REPORT_DIR: &str = "report";

/// One information-table row.
#[derive(Debug, Clone, PartialEq)]
pub struct MiRow {
    pub estimate: MIEstimate,
    /// Across-seed mean with labels frozen to the factual context.
    pub factual_label_mean: f64,
    pub partial: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub success: Vec<SuccessRow>,
    pub information: Vec<MiRow>,
    pub dir: PathBuf,
}

struct RunArtifacts {
    record: Option<RunRecord>,
    summary: Option<SeedSummary>,
    probe: Option<ProbeSummary>,
    curve: Option<String>,
}

fn load_run(dir: &Path, condition: crate::gridworld::Condition, family: &str, seed: u64) -> RunArtifacts {
    let record = read_record(dir).ok();
    let summary = match summarize_seed(dir) {
        Ok(s) => Some(s),
        // a record that exists but whose artifacts are unreadable counts as failed
        Err(e) if record.is_some() => Some(SeedSummary::failed(family, condition, seed, e.to_string())),
        Err(_) => None,
    };
    let ok = record.as_ref().is_some_and(RunRecord::is_ok);
    let probe = ok.then(|| read_json::<ProbeSummary>(&dir.join(PROBE_FILE)).ok()).flatten();
    let curve = ok.then(|| fs::read_to_string(dir.join(CURVE_FILE)).ok()).flatten();
    RunArtifacts { record, summary, probe, curve }
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&line(widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().iter().map(String::as_str).collect()));
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

const SUCCESS_HEADER: [&str; 12] = [
    "family",
    "condition",
    "solved",
    "seeds",
    "failed_runs",
    "phase0_rate",
    "phase1_rate",
    "mean_return",
    "mean_unshaped_return",
    "wrong_goal_rate",
    "mean_wrong_goal_visits",
    "partial",
];

const MI_HEADER: [&str; 8] =
    ["outcome", "family", "condition", "seeds", "mean_bits", "se_bits", "factual_label_mean_bits", "partial"];

fn success_csv(rows: &[SuccessRow]) -> String {
    let mut out = SUCCESS_HEADER.join(",") + "\n";
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            r.family,
            r.condition,
            r.solved,
            r.seeds,
            r.failed_runs,
            r.phase0_rate,
            r.phase1_rate,
            r.mean_return,
            r.mean_unshaped_return,
            r.wrong_goal_rate,
            r.mean_wrong_goal_visits,
            r.partial
        )
        .unwrap();
    }
    out
}

fn success_text(rows: &[SuccessRow]) -> String {
    let header = ["family", "condition", "solved", "phase0", "phase1", "return", "unshaped", "wrong_rate", "wrong_visits", "failed", "note"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.family.clone(),
                r.condition.to_string(),
                format!("{}/{}", r.solved, r.seeds),
                format!("{:.2}", r.phase0_rate),
                format!("{:.2}", r.phase1_rate),
                format!("{:.3}", r.mean_return),
                format!("{:.3}", r.mean_unshaped_return),
                format!("{:.2}", r.wrong_goal_rate),
                format!("{:.2}", r.mean_wrong_goal_visits),
                r.failed_runs.to_string(),
                if r.partial { "partial".into() } else { String::new() },
            ]
        })
        .collect();
    aligned(&header, &body)
}

fn fmt_se(se: Option<f64>) -> String {
    se.map_or_else(|| "NA".to_string(), |s| format!("{s:.6}"))
}

fn mi_csv(rows: &[MiRow]) -> String {
    let mut out = MI_HEADER.join(",") + "\n";
    for r in rows {
        let e = &r.estimate;
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{:.6},{}",
            e.outcome,
            e.family,
            e.condition,
            e.values.len(),
            e.mean,
            fmt_se(e.se),
            r.factual_label_mean,
            r.partial
        )
        .unwrap();
    }
    out
}

fn mi_text(rows: &[MiRow]) -> String {
    let header = ["outcome", "family", "condition", "seeds", "I(C;O|S) bits", "factual-label bits", "note"];
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let e = &r.estimate;
            let se = e.se.map_or_else(|| "NA".to_string(), |s| format!("{s:.4}"));
            vec![
                e.outcome.to_string(),
                e.family.clone(),
                e.condition.clone(),
                e.values.len().to_string(),
                format!("{:.4} ± {se}", e.mean),
                format!("{:.4}", r.factual_label_mean),
                if r.partial { "partial".into() } else { String::new() },
            ]
        })
        .collect();
    aligned(&header, &body)
}

fn provenance(cfg: &ExperimentConfig, runs: &[(String, Option<RunRecord>)]) -> String {
    let f = &cfg.file;
    let t = &f.train;
    let mut out = String::new();
    writeln!(out, "matrix_config_hash {}", cfg.matrix_hash()).unwrap();
    writeln!(out, "code_version {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "runs_planned {}", cfg.run_count()).unwrap();
    writeln!(out, "runs_recorded {}", runs.iter().filter(|(_, r)| r.is_some()).count()).unwrap();
    writeln!(out, "runs_ok {}", runs.iter().filter(|(_, r)| r.as_ref().is_some_and(RunRecord::is_ok)).count()).unwrap();
    out.push_str("\n[settings]\n");
    let settings: [(&str, String); 21] = [
        ("total_env_steps", t.total_env_steps.to_string()),
        ("eval_interval", t.eval_interval.to_string()),
        ("gamma", t.gamma.to_string()),
        ("lr", t.optimizer.lr.to_string()),
        ("lr_schedule", format!("{:?}", t.lr_schedule).to_lowercase()),
        ("adam_betas", format!("{} {}", t.optimizer.beta1, t.optimizer.beta2)),
        ("grad_clip", t.optimizer.clip.to_string()),
        ("entropy_coef", t.coefs.entropy.to_string()),
        ("value_coef", t.coefs.value.to_string()),
        ("d", f.d.to_string()),
        ("alpha", f.alpha.to_string()),
        ("horizon", f.env.horizon.to_string()),
        ("step_cost", f.env.step_cost.to_string()),
        ("goal_reward", f.env.goal_reward.to_string()),
        ("wrong_penalty", f.env.wrong_penalty.to_string()),
        ("blocked_penalty", f.env.blocked_penalty.to_string()),
        ("shaping_coef", f.env.shaping_coef.to_string()),
        ("probe_n", f.probe.n.to_string()),
        ("probe_prior", format!("{} {}", f.probe.prior[0], f.probe.prior[1])),
        ("probe_outcomes", f.probe.outcomes.iter().map(|o| o.name()).collect::<Vec<_>>().join(" ")),
        ("maze_sha256", super::config::sha256_hex(cfg.maze_text.as_bytes())),
    ];
    for (k, v) in settings {
        writeln!(out, "{k} {v}").unwrap();
    }
    out.push_str("\n[runs]\n");
    for (label, rec) in runs {
        match rec {
            Some(r) => {
                let status = if r.is_ok() { "ok" } else { "failed" };
                writeln!(out, "{label} {status} {} updates={} episodes={}", r.config_hash, r.updates, r.episodes).unwrap()
            }
            None => writeln!(out, "{label} missing").unwrap(),
        }
    }
    out
}

/// Aggregates whatever runs exist under `root` into `root/report/`. Output
/// bytes depend only on the run artifacts and the configuration.
pub fn emit_report(cfg: &ExperimentConfig, root: &Path) -> Result<Report, HarnessError> {
    let families = cfg.family_labels();
    let seeds = &cfg.file.seeds;
    let mut summaries = Vec::new();
    let mut probes: Vec<(String, String, u64, ProbeSummary)> = Vec::new();
    let mut runs = Vec::new();
    let mut curves = format!("condition,family,seed,{}\n", LearningCurve::CSV_HEADER);

    for &condition in &cfg.conditions {
        for family in &families {
            for &seed in seeds {
                let art = load_run(&run_dir(root, condition, family, seed), condition, family, seed);
                if let Some(s) = art.summary {
                    summaries.push(s);
                }
                if let Some(p) = art.probe {
                    probes.push((condition.to_string(), family.clone(), seed, p));
                }
                if let Some(text) = art.curve {
                    for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
                        writeln!(curves, "{condition},{family},{seed},{line}").unwrap();
                    }
                }
                runs.push((format!("{condition}/{family}/{seed}"), art.record));
            }
        }
    }

    let success = aggregate_success_table(&summaries, &families, &cfg.conditions, seeds.len());
    let mut information = Vec::new();
    for &outcome in &cfg.file.probe.outcomes {
        for family in &cfg.file.probe.report_families {
            for condition in &cfg.conditions {
                let cond = condition.to_string();
                let cell: Vec<(f64, f64)> = probes
                    .iter()
                    .filter(|(c, f, _, _)| c == &cond && f == family)
                    .filter_map(|(_, _, _, p)| p.bits(outcome).map(|o| (o.bits, o.bits_factual_labels)))
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                let values: Vec<f64> = cell.iter().map(|v| v.0).collect();
                let factual: Vec<f64> = cell.iter().map(|v| v.1).collect();
                information.push(MiRow {
                    partial: values.len() < seeds.len(),
                    factual_label_mean: mean_and_se(&factual).0,
                    estimate: aggregate_mi(family, &cond, outcome, cfg.file.probe.prior(), cfg.file.probe.n, values),
                });
            }
        }
    }

    let dir = root.join(REPORT_DIR);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let files: [(&str, String); 6] = [
        ("success_table.csv", success_csv(&success)),
        ("success_table.txt", success_text(&success)),
        ("mi_table.csv", mi_csv(&information)),
        ("mi_table.txt", mi_text(&information)),
        ("curves.csv", curves),
        ("provenance.txt", provenance(cfg, &runs)),
    ];
    for (name, body) in files {
        write_atomic(&dir.join(name), body.as_bytes())?;
    }
    Ok(Report { success, information, dir })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use crate::harness::matrix::run_matrix;

    #[test]
    fn no_runs_gives_headers_only() {
        let cfg = parse_config("", &[], Path::new(".")).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let report = emit_report(&cfg, tmp.path()).unwrap();
        assert!(report.success.is_empty() && report.information.is_empty());
        let csv = fs::read_to_string(report.dir.join("success_table.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let mi = fs::read_to_string(report.dir.join("mi_table.csv")).unwrap();
        assert_eq!(mi.trim_end(), MI_HEADER.join(","));
        let prov = fs::read_to_string(report.dir.join("provenance.txt")).unwrap();
        assert!(prov.contains("runs_planned 120") && prov.contains("AB25/L/0 missing"));
    }

    #[test]
    fn report_is_byte_deterministic_and_partial() {
        let text = "families = [\"I\"]\nconditions = [\"BA30\"]\nseeds = [3]\n[train]\ntotal_env_steps = 200\neval_interval = 100\n[probe]\nn = 10\nreport_families = [\"I\"]\n";
        let cfg = parse_config(text, &[], Path::new(".")).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_matrix(&cfg, a.path(), false).unwrap();
        run_matrix(&cfg, b.path(), false).unwrap();
        let ra = emit_report(&cfg, a.path()).unwrap();
        emit_report(&cfg, b.path()).unwrap();
        for name in ["success_table.csv", "success_table.txt", "mi_table.csv", "mi_table.txt", "curves.csv", "provenance.txt"] {
            let x = fs::read(a.path().join(REPORT_DIR).join(name)).unwrap();
            let y = fs::read(b.path().join(REPORT_DIR).join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        assert_eq!(ra.success.len(), 1);
        assert_eq!(ra.information.len(), 2);
        assert!(!ra.success[0].partial);
        // one seed: no standard error
        assert!(ra.information[0].estimate.se.is_none());
        let txt = fs::read_to_string(a.path().join(REPORT_DIR).join("mi_table.txt")).unwrap();
        assert!(txt.contains("± NA"));
    }

    #[test]
    fn parallel_and_serial_matrices_agree() {
        let text = "families = [\"L\", \"M8\"]\nconditions = [\"AB25\", \"BA30\"]\nseeds = [0, 1]\n[train]\ntotal_env_steps = 150\neval_interval = 50\n[probe]\nn = 10\n";
        let serial = parse_config(text, &[], Path::new(".")).unwrap();
        let parallel = parse_config(text, &["workers=3".to_string()], Path::new(".")).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_matrix(&serial, a.path(), false).unwrap();
        run_matrix(&parallel, b.path(), false).unwrap();
        emit_report(&serial, a.path()).unwrap();
        emit_report(&parallel, b.path()).unwrap();
        for name in ["success_table.csv", "mi_table.csv", "curves.csv", "provenance.txt"] {
            let x = fs::read(a.path().join(REPORT_DIR).join(name)).unwrap();
            let y = fs::read(b.path().join(REPORT_DIR).join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        let ckpt = |root: &Path| fs::read(run_dir(root, crate::gridworld::Condition::BA30, "M8", 1).join("checkpoint.json")).unwrap();
        assert_eq!(ckpt(a.path()), ckpt(b.path()));
    }
}
