use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ctxswitch::autodiff::Checkpoint;
use ctxswitch::evaluation::evaluate_greedy;
use ctxswitch::gridworld::{Condition, Env, Goal, DEFAULT_MAZE};
use ctxswitch::harness::{self, ExperimentConfig, RunPlan};
use ctxswitch::infoprobe::js_mixture_mi;
use ctxswitch::models::{Model, ModelFamily};
use ctxswitch::oracles;

#[derive(Parser)]
#[command(name = "ctxswitch", version, about = "Context-switching gridworld benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.optimizer.lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output root. Takes precedence over $CTXSWITCH_OUT and the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf), String> {
        let cfg = harness::load_config(self.config.as_deref(), &self.overrides).map_err(|e| e.to_string())?;
        let root = self.out.clone().unwrap_or_else(|| cfg.output_root());
        Ok((cfg, root))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train, evaluate and probe a single run.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        condition: Condition,
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the whole matrix (resumable), then write the report.
    Matrix {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Greedy evaluation of a saved checkpoint.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        checkpoint: PathBuf,
        #[arg(long)]
        condition: Condition,
    },
    /// Counterfactual information of a saved checkpoint.
    Probe {
        #[command(flatten)]
        cfg: ConfigArgs,
        checkpoint: PathBuf,
        #[arg(long)]
        condition: Condition,
    },
    /// Aggregate existing runs into tables.
    Report {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Finite-difference check of every primitive and the full loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Brute-force maze and information constants.
    Oracle,
}

fn load_model(path: &Path) -> Result<Model, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let ckpt = Checkpoint::from_json(&text).map_err(|e| e.to_string())?;
    Ok(Model::from_checkpoint(&ckpt).map_err(|e| e.to_string())?.0)
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn run(cli: Cli) -> Result<bool, String> {
    match cli.command {
        Command::Train { cfg, condition, family, seed } => {
            let (cfg, root) = cfg.load()?;
            let family = ModelFamily::parse(&family, cfg.file.d, cfg.file.alpha, cfg.file.permissive_families)
                .map_err(|e| e.to_string())?;
            condition.validate(cfg.file.env.horizon).map_err(|e| e.to_string())?;
            let rec = harness::execute_run(&cfg, &root, &RunPlan { condition, family, seed });
            println!("{}", to_json(&rec));
            Ok(rec.is_ok())
        }
        Command::Matrix { cfg } => {
            let (cfg, root) = cfg.load()?;
            eprintln!("{} runs under {}", cfg.run_count(), root.display());
            let out = harness::run_matrix(&cfg, &root, true).map_err(|e| e.to_string())?;
            let failed = out.records.iter().filter(|r| !r.is_ok()).count();
            eprintln!("executed {}, reused {}, failed {failed}", out.executed, out.skipped);
            let report = harness::emit_report(&cfg, &root).map_err(|e| e.to_string())?;
            print!("{}", std::fs::read_to_string(report.dir.join("success_table.txt")).unwrap_or_default());
            println!();
            print!("{}", std::fs::read_to_string(report.dir.join("mi_table.txt")).unwrap_or_default());
            Ok(failed == 0)
        }
        Command::Eval { cfg, checkpoint, condition } => {
            let (cfg, _) = cfg.load()?;
            let model = load_model(&checkpoint)?;
            let env = Env::new(cfg.maze.clone(), condition, cfg.file.env).map_err(|e| e.to_string())?;
            println!("{}", to_json(&evaluate_greedy(&env, &model)));
            Ok(true)
        }
        Command::Probe { cfg, checkpoint, condition } => {
            let (cfg, _) = cfg.load()?;
            let text = std::fs::read_to_string(&checkpoint).map_err(|e| format!("{}: {e}", checkpoint.display()))?;
            let (model, seed) =
                Model::from_checkpoint(&Checkpoint::from_json(&text).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
            let env = Env::new(cfg.maze.clone(), condition, cfg.file.env).map_err(|e| e.to_string())?;
            let summary = harness::probe_model(&cfg, &env, &model, seed).map_err(|e| e.to_string())?;
            println!("{}", to_json(&summary));
            Ok(true)
        }
        Command::Report { cfg } => {
            let (cfg, root) = cfg.load()?;
            let report = harness::emit_report(&cfg, &root).map_err(|e| e.to_string())?;
            println!("wrote {} ({} success rows, {} information rows)", report.dir.display(), report.success.len(), report.information.len());
            Ok(true)
        }
        Command::Gradcheck { seed } => {
            let started = std::time::Instant::now();
            let cases = oracles::gradient_suite(seed);
            let mut all = true;
            for c in &cases {
                let verdict = if c.passed() { "ok" } else { "FAIL" };
                all &= c.passed();
                println!("{:<24} {:>4} coords  max rel err {:.3e}  {verdict}", c.name, c.report.coords_checked, c.report.max_rel_error);
            }
            println!("{} cases, tolerance {:.0e}, {:.2}s", cases.len(), oracles::GRAD_TOLERANCE, started.elapsed().as_secs_f64());
            Ok(all)
        }
        Command::Oracle => {
            let maze = ctxswitch::gridworld::MazeSpec::default_maze();
            println!("shipped maze:\n{maze}");
            for (a, b) in [('S', '1'), ('S', '2'), ('1', '2')] {
                let d = oracles::brute_force_distance(DEFAULT_MAZE, a, b).map_or("unreachable".into(), |d| d.to_string());
                println!("distance {a}->{b}: {d}");
            }
            for cond in [Condition::AB25, Condition::BA30] {
                let actions = oracles::scripted_optimal_actions(&maze, cond);
                println!("scripted solution {cond}: {} actions", actions.len());
            }
            println!("goal cells: G1 {:?}, G2 {:?}", maze.goal_cell(Goal::G1), maze.goal_cell(Goal::G2));
            let cases: [(&[f64], &[f64], f64); 4] = [
                (&[0.75, 0.25], &[0.25, 0.75], 0.5),
                (&[1.0, 0.0], &[0.0, 1.0], 0.5),
                (&[0.2, 0.5, 0.3], &[0.6, 0.1, 0.3], 0.5),
                (&[0.9, 0.1], &[0.1, 0.9], 0.25),
            ];
            for (p0, p1, w0) in cases {
                let js = js_mixture_mi(p0, p1, w0, 1.0 - w0).map_err(|e| e.to_string())?;
                let joint = oracles::joint_table_mi(p0, p1, w0, 1.0 - w0);
                println!("I(C;O) p0={p0:?} p1={p1:?} w0={w0}: {js:.15} bits (joint table {joint:.15})");
            }
            for label in ["L", "I", "M8", "M16", "M32", "M64"] {
                let f: ModelFamily = label.parse().map_err(|e: ctxswitch::models::ModelError| e.to_string())?;
                println!("parameters {label}: {}", f.param_count());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
