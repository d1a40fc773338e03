//! Counterfactual estimate of the conditional contextual information
//! `Î(C;O|S)` in phase 1.
//!
//! For each stored phase-1 state `s` the policy is evaluated under both
//! contexts while `s` is held fixed. The two action distributions are
//! pushed through the local move geometry to an outcome alphabet, and the
//! prior-weighted divergence of each from their mixture (the Jensen–Shannon
//! divergence under a uniform prior) is averaged over states. Everything is
//! in bits, so a binary context bounds every value by 1.

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{classify_moves, Cell, CellClass, Context, Env, MazeSpec, MoveClass, Observation, PATCH_CELLS};
use crate::models::{ActMode, FamilyTag, Hidden, Model};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProbeError {
    #[error("collected only {gathered} of {wanted} phase-1 records within {episodes} episodes")]
    UnderCollection { gathered: usize, wanted: usize, episodes: usize },
    #[error("distributions have different alphabet sizes ({0} vs {1})")]
    AlphabetMismatch(usize, usize),
    #[error("prior weights must be non-negative and sum to 1, got ({0}, {1})")]
    BadPrior(f64, f64),
    #[error("unknown outcome {0:?} (expected target_hit or goal3)")]
    UnknownOutcome(String),
}

/// Outcome alphabet derived from the next move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeDef {
    /// {hit, miss}: the next step enters the context-appropriate target.
    TargetHit,
    /// {other, target, wrong}.
    Goal3,
}

impl OutcomeDef {
    pub const ALL: [OutcomeDef; 2] = [OutcomeDef::TargetHit, OutcomeDef::Goal3];

    pub fn name(self) -> &'static str {
        match self {
            OutcomeDef::TargetHit => "target_hit",
            OutcomeDef::Goal3 => "goal3",
        }
    }

    pub fn alphabet(self) -> &'static [&'static str] {
        match self {
            OutcomeDef::TargetHit => &["hit", "miss"],
            OutcomeDef::Goal3 => &["other", "target", "wrong"],
        }
    }

    fn symbol(self, class: MoveClass) -> usize {
        match (self, class) {
            (OutcomeDef::TargetHit, MoveClass::Target) => 0,
            (OutcomeDef::TargetHit, _) => 1,
            (OutcomeDef::Goal3, MoveClass::Other) => 0,
            (OutcomeDef::Goal3, MoveClass::Target) => 1,
            (OutcomeDef::Goal3, MoveClass::Wrong) => 2,
        }
    }
}

impl fmt::Display for OutcomeDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OutcomeDef {
    type Err = ProbeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "target_hit" => Ok(OutcomeDef::TargetHit),
            "goal3" => Ok(OutcomeDef::Goal3),
            _ => Err(ProbeError::UnknownOutcome(s.to_string())),
        }
    }
}

/// Weights `(w_A, w_B)` of the context prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub w_a: f64,
    pub w_b: f64,
}

impl Prior {
    pub const UNIFORM: Prior = Prior { w_a: 0.5, w_b: 0.5 };

    pub fn new(w_a: f64, w_b: f64) -> Result<Prior, ProbeError> {
        if w_a < 0.0 || w_b < 0.0 || ((w_a + w_b) - 1.0).abs() > 1e-12 {
            return Err(ProbeError::BadPrior(w_a, w_b));
        }
        Ok(Prior { w_a, w_b })
    }
}

impl Default for Prior {
    fn default() -> Self {
        Prior::UNIFORM
    }
}

/// A stored phase-1 decision point with everything needed to replay it counterfactually.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    /// Conditioning latent: the LSTM output before any intervention.
    pub s: Vec<f64>,
    pub pos: Cell,
    pub t: usize,
    pub factual_context: Context,
    /// Carry entering the step.
    pub hidden_prev: Hidden,
    pub patch: [CellClass; PATCH_CELLS],
}

/// Samples episodes until `n` phase-1 records are stored.
pub fn collect_states(
    env: &Env,
    model: &Model,
    n: usize,
    max_episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<ProbeRecord>, ProbeError> {
    let t_switch = env.condition().t_switch;
    let mut records = Vec::with_capacity(n);
    let mut episodes = 0;
    while records.len() < n {
        if episodes == max_episodes {
            return Err(ProbeError::UnderCollection { gathered: records.len(), wanted: n, episodes });
        }
        episodes += 1;
        let (mut state, mut obs) = env.reset();
        let mut hidden = model.initial_hidden();
        while !state.done && records.len() < n {
            let out = model.act(&obs, &hidden, ActMode::Sample(rng));
            if state.t >= t_switch {
                records.push(ProbeRecord {
                    s: out.latent.z.clone(),
                    pos: state.pos,
                    t: state.t,
                    factual_context: obs.context,
                    hidden_prev: hidden.clone(),
                    patch: obs.patch,
                });
            }
            let tr = env.step(&state, out.action).expect("episode not finished");
            hidden = out.latent.hidden;
            state = tr.state;
            obs = tr.obs;
        }
    }
    Ok(records)
}

/// Action distribution at `record` had the context been `c`.
///
/// * I: heads applied to `s + α W_c s`; the recurrence is untouched.
/// * L: the final recurrent step is recomputed from the stored carry and
///   patch with the context input set to `c`.
/// * M: no context pathway, so both contexts give the factual policy.
pub fn counterfactual_policy(model: &Model, record: &ProbeRecord, c: Context) -> [f64; 4] {
    match model.family().tag {
        FamilyTag::I => model.policy_value(&model.intervene(&record.s, c)).0,
        FamilyTag::L => {
            let obs = Observation { patch: record.patch, context: c };
            let latent = model.recurrent_step(&model.encode_obs(&obs), &record.hidden_prev);
            model.policy_value(&latent.z).0
        }
        FamilyTag::M => model.policy_value(&record.s).0,
    }
}

/// Pushes an action distribution through the move classes at `pos`, with
/// target/wrong labels taken from `label_context`.
pub fn outcome_dist(maze: &MazeSpec, probs: &[f64; 4], pos: Cell, label_context: Context, def: OutcomeDef) -> Vec<f64> {
    let classes = classify_moves(maze, pos, label_context);
    let mut out = vec![0.0; def.alphabet().len()];
    for (p, class) in probs.iter().zip(classes) {
        out[def.symbol(class)] += p;
    }
    out
}

fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(&pi, _)| pi > 0.0).map(|(pi, qi)| pi * (pi / qi).log2()).sum()
}

/// `w0 KL(p0‖m) + w1 KL(p1‖m)` in bits with `m = w0 p0 + w1 p1`.
pub fn js_mixture_mi(p0: &[f64], p1: &[f64], w0: f64, w1: f64) -> Result<f64, ProbeError> {
    if p0.len() != p1.len() {
        return Err(ProbeError::AlphabetMismatch(p0.len(), p1.len()));
    }
    let m: Vec<f64> = p0.iter().zip(p1).map(|(a, b)| w0 * a + w1 * b).collect();
    let mut value = 0.0;
    if w0 > 0.0 {
        value += w0 * kl_bits(p0, &m);
    }
    if w1 > 0.0 {
        value += w1 * kl_bits(p1, &m);
    }
    // roundoff can leave tiny negatives when p0 == p1
    Ok(value.max(0.0))
}

/// Which context supplies the target/wrong labels of the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Labels {
    /// Labels follow the counterfactual context (the estimator proper).
    Counterfactual,
    /// Labels frozen to the factual context; isolates the policy's own dependence on `c`.
    Factual,
}

/// Per-record contextual information at one stored state.
pub fn record_information(
    model: &Model,
    maze: &MazeSpec,
    record: &ProbeRecord,
    def: OutcomeDef,
    prior: Prior,
    labels: Labels,
) -> f64 {
    let dists = Context::ALL.map(|c| {
        let pi = counterfactual_policy(model, record, c);
        let label_ctx = match labels {
            Labels::Counterfactual => c,
            Labels::Factual => record.factual_context,
        };
        outcome_dist(maze, &pi, record.pos, label_ctx, def)
    });
    js_mixture_mi(&dists[0], &dists[1], prior.w_a, prior.w_b).expect("same alphabet")
}

/// Mean per-record information over `records` (uniform weight per record).
pub fn mean_information(
    model: &Model,
    maze: &MazeSpec,
    records: &[ProbeRecord],
    def: OutcomeDef,
    prior: Prior,
    labels: Labels,
) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| record_information(model, maze, r, def, prior, labels)).sum::<f64>() / records.len() as f64
}

/// Collects `n` records and returns the per-seed estimate in bits.
pub fn estimate_cmi(
    env: &Env,
    model: &Model,
    def: OutcomeDef,
    prior: Prior,
    n: usize,
    rng: &mut dyn RngCore,
) -> Result<f64, ProbeError> {
    let records = collect_states(env, model, n, n, rng)?;
    Ok(mean_information(model, env.maze(), &records, def, prior, Labels::Counterfactual))
}

/// Across-seed aggregate. `se` is `None` with fewer than two values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub family: String,
    pub condition: String,
    pub outcome: OutcomeDef,
    pub prior: Prior,
    pub records_per_seed: usize,
    pub values: Vec<f64>,
    pub mean: f64,
    pub se: Option<f64>,
}

/// Mean and standard error of the mean (sample sd / √k).
pub fn mean_and_se(values: &[f64]) -> (f64, Option<f64>) {
    let k = values.len();
    if k == 0 {
        return (0.0, None);
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    (mean, Some((var / k as f64).sqrt()))
}

pub fn aggregate_mi(
    family: &str,
    condition: &str,
    outcome: OutcomeDef,
    prior: Prior,
    records_per_seed: usize,
    values: Vec<f64>,
) -> MIEstimate {
    let (mean, se) = mean_and_se(&values);
    MIEstimate {
        family: family.to_string(),
        condition: condition.to_string(),
        outcome,
        prior,
        records_per_seed,
        values,
        mean,
        se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::{load_maze, Condition, EnvConfig};
    use crate::models::{stream_rng, ModelFamily, Stream};
    use proptest::prelude::*;

    const OPEN_ROOM: &str = "#########\n#S.....1#\n#.......#\n#.......#\n#.......#\n#.......#\n#.......#\n#......2#\n#########\n";

    /// I(C;O) from the explicit joint table p(c, o) = w_c p_c(o).
    fn joint_table_mi(p0: &[f64], p1: &[f64], w0: f64, w1: f64) -> f64 {
        let joint = [p0.iter().map(|p| w0 * p).collect::<Vec<_>>(), p1.iter().map(|p| w1 * p).collect()];
        let pc = [w0, w1];
        let po: Vec<f64> = (0..p0.len()).map(|o| joint[0][o] + joint[1][o]).collect();
        let mut mi = 0.0;
        for c in 0..2 {
            for o in 0..p0.len() {
                let pj = joint[c][o];
                if pj > 0.0 {
                    mi += pj * (pj / (pc[c] * po[o])).log2();
                }
            }
        }
        mi
    }

    #[test]
    fn js_special_values() {
        assert_eq!(js_mixture_mi(&[0.3, 0.7], &[0.3, 0.7], 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(js_mixture_mi(&[1.0, 0.0], &[0.0, 1.0], 0.5, 0.5).unwrap(), 1.0);
        // 50-digit evaluation of the same formula: 1 - H2(0.75)
        let v = js_mixture_mi(&[0.75, 0.25], &[0.25, 0.75], 0.5, 0.5).unwrap();
        assert!((v - 0.188_721_875_540_867_14).abs() < 1e-15, "{v}");
        assert!(matches!(js_mixture_mi(&[1.0], &[0.5, 0.5], 0.5, 0.5), Err(ProbeError::AlphabetMismatch(1, 2))));
    }

    fn dist(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..1.0f64], n).prop_filter_map("non-zero", |v| {
            let s: f64 = v.iter().sum();
            (s > 0.0).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn matches_joint_table(
            (p0, p1) in (2usize..6).prop_flat_map(|n| (dist(n), dist(n))),
            w0 in 0.0..=1.0f64,
        ) {
            let w1 = 1.0 - w0;
            let js = js_mixture_mi(&p0, &p1, w0, w1).unwrap();
            let oracle = joint_table_mi(&p0, &p1, w0, w1);
            prop_assert!((js - oracle).abs() <= 1e-12, "{js} vs {oracle}");
            prop_assert!((0.0..=1.0 + 1e-12).contains(&js));
        }
    }

    fn room_env() -> Env {
        Env::new(load_maze(OPEN_ROOM).unwrap(), Condition::AB25, EnvConfig::default()).unwrap()
    }

    fn record_at(pos: Cell, model: &Model) -> ProbeRecord {
        ProbeRecord {
            s: vec![0.1; model.family().recurrent_size()],
            pos,
            t: 30,
            factual_context: Context::B,
            hidden_prev: model.initial_hidden(),
            patch: [CellClass::Free; 9],
        }
    }

    #[test]
    fn outcome_geometry() {
        let maze = load_maze(OPEN_ROOM).unwrap();
        let uniform = [0.25; 4];
        let left_of_g1 = Cell::new(1, 6);
        assert_eq!(outcome_dist(&maze, &uniform, left_of_g1, Context::A, OutcomeDef::TargetHit), vec![0.25, 0.75]);
        assert_eq!(outcome_dist(&maze, &uniform, left_of_g1, Context::B, OutcomeDef::TargetHit), vec![0.0, 1.0]);
        assert_eq!(outcome_dist(&maze, &uniform, left_of_g1, Context::B, OutcomeDef::Goal3), vec![0.75, 0.0, 0.25]);
        let far = Cell::new(4, 3);
        for c in Context::ALL {
            assert_eq!(outcome_dist(&maze, &uniform, far, c, OutcomeDef::TargetHit), vec![0.0, 1.0]);
        }
    }

    #[test]
    fn memory_family_is_context_blind() {
        let model = Model::init(ModelFamily::memory(32, 16), 0).unwrap();
        let rec = record_at(Cell::new(1, 6), &model);
        assert_eq!(counterfactual_policy(&model, &rec, Context::A), counterfactual_policy(&model, &rec, Context::B));
        // labels alone create information next to a goal ...
        let maze = load_maze(OPEN_ROOM).unwrap();
        let cf = record_information(&model, &maze, &rec, OutcomeDef::TargetHit, Prior::UNIFORM, Labels::Counterfactual);
        assert!(cf > 0.0);
        // ... and none once labels are frozen
        let frozen = record_information(&model, &maze, &rec, OutcomeDef::Goal3, Prior::UNIFORM, Labels::Factual);
        assert_eq!(frozen, 0.0);
    }

    #[test]
    fn intervention_family_at_init_is_context_blind() {
        let model = Model::init(ModelFamily::intervention(32, 0.1), 0).unwrap();
        let rec = record_at(Cell::new(3, 3), &model);
        assert_eq!(counterfactual_policy(&model, &rec, Context::A), counterfactual_policy(&model, &rec, Context::B));
        let mut shared = model.clone();
        let w: Vec<f64> = (0..1024).map(|k| (k as f64 * 0.01).sin()).collect();
        shared.set_param("intervention.w_a", w.clone());
        shared.set_param("intervention.w_b", w);
        assert_eq!(counterfactual_policy(&shared, &rec, Context::A), counterfactual_policy(&shared, &rec, Context::B));
    }

    #[test]
    fn label_assisted_counterfactual_differs() {
        let model = Model::init(ModelFamily::label_assisted(32), 0).unwrap();
        let rec = record_at(Cell::new(3, 3), &model);
        assert_ne!(counterfactual_policy(&model, &rec, Context::A), counterfactual_policy(&model, &rec, Context::B));
    }

    #[test]
    fn collection_is_phase_one_and_reproducible() {
        let env = room_env();
        let model = Model::init(ModelFamily::intervention(32, 0.1), 1).unwrap();
        let a = collect_states(&env, &model, 300, 300, &mut stream_rng(1, Stream::Probe)).unwrap();
        let b = collect_states(&env, &model, 300, 300, &mut stream_rng(1, Stream::Probe)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 300);
        assert!(a.iter().all(|r| r.t >= 25 && r.s.len() == 32 && r.factual_context == Context::B));
    }

    #[test]
    fn under_collection_is_reported() {
        let env = room_env();
        let model = Model::init(ModelFamily::memory(32, 8), 1).unwrap();
        // an untrained policy never finishes early, so one episode yields 55 phase-1 steps
        let err = collect_states(&env, &model, 1000, 1, &mut stream_rng(0, Stream::Probe)).unwrap_err();
        assert!(matches!(err, ProbeError::UnderCollection { wanted: 1000, episodes: 1, .. }));
    }

    #[test]
    fn init_intervention_matches_memory_style_label_value() {
        // With π_A = π_B the estimate only reflects label flips, so it equals
        // the value computed from the factual policy with flipped labels.
        let env = room_env();
        let model = Model::init(ModelFamily::intervention(32, 0.1), 2).unwrap();
        let records = collect_states(&env, &model, 500, 500, &mut stream_rng(2, Stream::Probe)).unwrap();
        let est = mean_information(&model, env.maze(), &records, OutcomeDef::TargetHit, Prior::UNIFORM, Labels::Counterfactual);
        let label_only: f64 = records
            .iter()
            .map(|r| {
                let pi = model.policy_value(&r.s).0;
                let d = Context::ALL.map(|c| outcome_dist(env.maze(), &pi, r.pos, c, OutcomeDef::TargetHit));
                js_mixture_mi(&d[0], &d[1], 0.5, 0.5).unwrap()
            })
            .sum::<f64>()
            / records.len() as f64;
        assert_eq!(est, label_only);
    }

    #[test]
    fn aggregate_arithmetic() {
        let (m, se) = mean_and_se(&[0.02, 0.04]);
        assert!((m - 0.03).abs() < 1e-15);
        assert!((se.unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(mean_and_se(&[0.5, 0.5, 0.5]).1, Some(0.0));
        assert_eq!(mean_and_se(&[0.5]), (0.5, None));
        let est = aggregate_mi("I", "AB25", OutcomeDef::Goal3, Prior::UNIFORM, 10, vec![0.1, 0.3]);
        assert!((est.mean - 0.2).abs() < 1e-15);
    }

    #[test]
    fn prior_validation() {
        assert!(Prior::new(0.3, 0.7).is_ok());
        assert!(Prior::new(0.3, 0.6).is_err());
        assert!(Prior::new(-0.1, 1.1).is_err());
        assert_eq!("goal3".parse::<OutcomeDef>().unwrap(), OutcomeDef::Goal3);
        assert!("action".parse::<OutcomeDef>().is_err());
    }
}
