use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::autodiff::AdamConfig;
use crate::gridworld::{load_maze, Condition, EnvConfig, MazeSpec, DEFAULT_MAZE};
use crate::infoprobe::{OutcomeDef, Prior};
use crate::models::{ModelFamily, DEFAULT_ALPHA, DEFAULT_D};
use crate::training::{LossCoefs, LrSchedule, TrainConfig, DEFAULT_LR};

/// Environment variable that overrides the configured output root.
pub const OUTPUT_ENV: &str = "CTXSWITCH_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub total_env_steps: u64,
    pub gamma: f64,
    pub eval_interval: u64,
    pub optimizer: AdamConfig,
    pub lr_schedule: LrSchedule,
    pub coefs: LossCoefs,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            total_env_steps: 300_000,
            gamma: 0.99,
            eval_interval: 10_000,
            optimizer: AdamConfig { lr: DEFAULT_LR, ..AdamConfig::default() },
            lr_schedule: LrSchedule::Constant,
            coefs: LossCoefs::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSettings {
    /// Phase-1 records per trained model.
    pub n: usize,
    pub outcomes: Vec<OutcomeDef>,
    /// `[w_A, w_B]`
    pub prior: [f64; 2],
    /// Families listed in the information table.
    pub report_families: Vec<String>,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            n: 2000,
            outcomes: OutcomeDef::ALL.to_vec(),
            prior: [0.5, 0.5],
            report_families: ["L", "I", "M16"].map(String::from).to_vec(),
        }
    }
}

impl ProbeSettings {
    pub fn prior(&self) -> Prior {
        Prior { w_a: self.prior[0], w_b: self.prior[1] }
    }
}

/// The on-disk TOML layout. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    /// Maze file; the shipped layout when absent.
    pub maze: Option<PathBuf>,
    pub output_root: PathBuf,
    pub conditions: Vec<String>,
    pub families: Vec<String>,
    pub seeds: Vec<u64>,
    /// Accept memory sizes outside the benchmark sweep.
    pub permissive_families: bool,
    pub workers: usize,
    pub d: usize,
    pub alpha: f64,
    pub train: TrainSettings,
    pub env: EnvConfig,
    pub probe: ProbeSettings,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self {
            maze: None,
            output_root: PathBuf::from("results"),
            conditions: vec!["AB25".into(), "BA30".into()],
            families: ["L", "I", "M8", "M16", "M32", "M64"].map(String::from).to_vec(),
            seeds: (0..10).collect(),
            permissive_families: false,
            workers: 1,
            d: DEFAULT_D,
            alpha: DEFAULT_ALPHA,
            train: TrainSettings::default(),
            env: EnvConfig::default(),
            probe: ProbeSettings::default(),
        }
    }
}

/// A validated configuration with families, conditions and the maze resolved.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub conditions: Vec<Condition>,
    pub families: Vec<ModelFamily>,
    pub maze: MazeSpec,
    pub maze_text: String,
}

/// Applies one `dotted.key=value` override to a TOML table. The value is
/// read as a TOML literal, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), HarnessError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| HarnessError::Override(spec.to_string()))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut node = table;
    for part in path {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| HarnessError::Override(spec.to_string()))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

/// Parses config text plus overrides into a validated configuration.
/// Relative maze paths resolve against `base_dir`.
pub fn parse_config(text: &str, overrides: &[String], base_dir: &Path) -> Result<ExperimentConfig, HarnessError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    let file: ConfigFile = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
    ExperimentConfig::from_file(file, base_dir)
}

/// Reads `path` (or uses an empty document when `None`) and applies overrides.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig, HarnessError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| HarnessError::io(p, e))?;
            parse_config(&text, overrides, p.parent().unwrap_or(Path::new(".")))
        }
        None => parse_config("", overrides, Path::new(".")),
    }
}

impl ExperimentConfig {
    pub fn from_file(file: ConfigFile, base_dir: &Path) -> Result<Self, HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        let conditions = file
            .conditions
            .iter()
            .map(|c| c.parse::<Condition>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        for c in &conditions {
            c.validate(file.env.horizon).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        let families = file
            .families
            .iter()
            .map(|f| ModelFamily::parse(f, file.d, file.alpha, file.permissive_families))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        for f in &file.probe.report_families {
            ModelFamily::parse(f, file.d, file.alpha, file.permissive_families).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Prior::new(file.probe.prior[0], file.probe.prior[1]).map_err(|e| HarnessError::Config(e.to_string()))?;
        if file.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if file.d == 0 {
            return bad("d must be positive".into());
        }
        if has_duplicates(&file.conditions) || has_duplicates(&file.families) || has_duplicates(&file.seeds) {
            return bad("conditions, families and seeds must not repeat".into());
        }
        let maze_text = match &file.maze {
            Some(p) => {
                let p = base_dir.join(p);
                std::fs::read_to_string(&p).map_err(|e| HarnessError::io(&p, e))?
            }
            None => DEFAULT_MAZE.to_string(),
        };
        let maze = load_maze(&maze_text).map_err(|e| HarnessError::Config(e.to_string()))?;
        let cfg = Self { file, conditions, families, maze, maze_text };
        // surfaces training-level validation errors before any run starts
        if let (Some(&c), Some(&f)) = (cfg.conditions.first(), cfg.families.first()) {
            cfg.train_config(c, f, 0).validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn run_count(&self) -> usize {
        self.conditions.len() * self.families.len() * self.file.seeds.len()
    }

    pub fn train_config(&self, condition: Condition, family: ModelFamily, seed: u64) -> TrainConfig {
        let t = &self.file.train;
        TrainConfig {
            condition,
            family,
            total_env_steps: t.total_env_steps,
            gamma: t.gamma,
            optimizer: t.optimizer,
            lr_schedule: t.lr_schedule,
            coefs: t.coefs,
            eval_interval: t.eval_interval,
            seed,
            env: self.file.env,
        }
    }

    /// Output root: `$CTXSWITCH_OUT` when set, else the configured value.
    pub fn output_root(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.file.output_root.clone(),
        }
    }

    pub fn family_labels(&self) -> Vec<String> {
        self.families.iter().map(ModelFamily::label).collect()
    }

    /// Hash binding one run's outputs to everything that determines them.
    pub fn run_hash(&self, condition: Condition, family: ModelFamily, seed: u64) -> String {
        #[derive(Serialize)]
        struct Identity<'a> {
            train: TrainConfig,
            maze: &'a str,
            probe: &'a ProbeSettings,
            version: &'a str,
        }
        let id = Identity {
            train: self.train_config(condition, family, seed),
            maze: &self.maze_text,
            probe: &self.file.probe,
            version: env!("CARGO_PKG_VERSION"),
        };
        sha256_hex(serde_json::to_string(&id).expect("serializable").as_bytes())
    }

    /// Hash of the whole resolved configuration, excluding where outputs go.
    pub fn matrix_hash(&self) -> String {
        let mut file = self.file.clone();
        file.output_root = PathBuf::new();
        file.workers = 0;
        file.maze = None;
        let text = serde_json::to_string(&(file, &self.maze_text)).expect("serializable");
        sha256_hex(text.as_bytes())
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, overrides: &[&str]) -> Result<ExperimentConfig, HarnessError> {
        let ov: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        parse_config(text, &ov, Path::new("."))
    }

    #[test]
    fn empty_file_is_full_matrix() {
        let cfg = parse("", &[]).unwrap();
        assert_eq!(cfg.run_count(), 120);
        assert_eq!(cfg.family_labels(), ["L", "I", "M8", "M16", "M32", "M64"]);
        assert_eq!(cfg.conditions, [Condition::AB25, Condition::BA30]);
        assert_eq!(cfg.file.train.total_env_steps, 300_000);
        assert_eq!(cfg.file.probe.n, 2000);
    }

    #[test]
    fn alpha_override_reaches_intervention_runs() {
        let cfg = parse("", &["alpha=0.2"]).unwrap();
        let i = cfg.families.iter().find(|f| f.label() == "I").unwrap();
        assert_eq!(i.alpha, 0.2);
        let tc = cfg.train_config(Condition::AB25, *i, 0);
        assert_eq!(tc.family.alpha, 0.2);
    }

    #[test]
    fn nested_override_and_file_values() {
        let cfg = parse("seeds = [0, 1]\n[train]\ntotal_env_steps = 2000\n", &["train.optimizer.lr=1e-3", "probe.n=50"]).unwrap();
        assert_eq!(cfg.file.train.total_env_steps, 2000);
        assert_eq!(cfg.file.train.optimizer.lr, 1e-3);
        assert_eq!(cfg.file.train.optimizer.beta2, 0.999);
        assert_eq!(cfg.file.probe.n, 50);
        assert_eq!(cfg.run_count(), 24);
        assert_eq!(cfg.file.train.lr_schedule, LrSchedule::Constant);
        let linear = parse("", &["train.lr_schedule=linear"]).unwrap();
        assert_eq!(linear.train_config(Condition::AB25, linear.families[0], 0).lr_schedule, LrSchedule::Linear);
        assert!(parse("", &["train.lr_schedule=cosine"]).is_err());
    }

    #[test]
    fn string_override_falls_back() {
        let cfg = parse("", &["conditions=[\"BA40\"]", "output_root=out/x"]).unwrap();
        assert_eq!(cfg.conditions[0].t_switch, 40);
        assert_eq!(cfg.file.output_root, PathBuf::from("out/x"));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(matches!(parse("colour = 3", &[]), Err(HarnessError::Config(_))));
        assert!(matches!(parse("[train]\nlearning_rate = 3", &[]), Err(HarnessError::Config(_))));
        assert!(parse("families = [\"M12\"]", &[]).is_err());
        assert!(parse("families = [\"M12\"]\npermissive_families = true", &[]).is_ok());
        assert!(parse("conditions = [\"AB80\"]", &[]).is_err());
        assert!(parse("conditions = [\"AB79\"]", &[]).is_ok());
        assert!(parse("", &["env.horizon=30"]).is_err());
        assert!(parse("", &["noequals"]).is_err());
        assert!(parse("probe.prior = [0.7, 0.7]", &[]).is_err());
        assert!(parse("seeds = [1, 1]", &[]).is_err());
    }

    #[test]
    fn hashes_track_configuration() {
        let a = parse("", &[]).unwrap();
        let b = parse("", &["train.optimizer.lr=1e-3"]).unwrap();
        let c = parse("", &["workers=4", "output_root=elsewhere"]).unwrap();
        let (cond, fam) = (Condition::AB25, a.families[0]);
        assert_eq!(a.run_hash(cond, fam, 0), a.run_hash(cond, fam, 0));
        assert_ne!(a.run_hash(cond, fam, 0), a.run_hash(cond, fam, 1));
        assert_ne!(a.run_hash(cond, fam, 0), b.run_hash(cond, fam, 0));
        assert_eq!(a.run_hash(cond, fam, 0), c.run_hash(cond, fam, 0));
        assert_eq!(a.matrix_hash(), c.matrix_hash());
        assert_eq!(a.run_hash(cond, fam, 0).len(), 64);
    }
}
