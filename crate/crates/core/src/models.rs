//! The three recurrent policy families.
//!
//! All share one encoder → LSTM → (policy, value) shape and differ only in
//! where the context token enters:
//!
//! * `L` concatenates the context one-hot to the observation input.
//! * `M` never sees the context and gets `m` extra recurrent units.
//! * `I` never feeds the context to the recurrence; it modulates the LSTM
//!   output with `z' = z + α W_c z` before the heads. The recurrent carry
//!   passed to the next step is the un-modulated LSTM state.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{matvec_into, softmax, AutodiffError, Bindings, Checkpoint, ParamId, ParamStore, Tape, Var};
use crate::gridworld::{Action, Context, Observation, PATCH_FEATURES};

/// Width of the observation encoder output.
pub const ENCODER_WIDTH: usize = 64;
pub const CONTEXT_FEATURES: usize = 2;
pub const FORGET_BIAS: f64 = 1.0;
pub const DEFAULT_D: usize = 32;
pub const DEFAULT_ALPHA: f64 = 0.1;
/// Memory sizes of the M sweep.
pub const MEMORY_SIZES: [usize; 4] = [8, 16, 32, 64];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FamilyTag {
    L,
    M,
    I,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model family {0:?} (expected L, I or M<k>)")]
    UnknownFamily(String),
    #[error("memory size {0} is not in the benchmark sweep {MEMORY_SIZES:?}")]
    MemoryNotAllowed(usize),
    #[error("intervention strength must be positive, got {0}")]
    BadAlpha(f64),
    #[error("checkpoint metadata: {0}")]
    BadMeta(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Family tag plus its sizes. `m` is only non-zero for `M`; `alpha` only for `I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelFamily {
    pub tag: FamilyTag,
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
}

impl ModelFamily {
    pub fn label_assisted(d: usize) -> Self {
        Self { tag: FamilyTag::L, d, m: 0, alpha: 0.0 }
    }

    pub fn memory(d: usize, m: usize) -> Self {
        Self { tag: FamilyTag::M, d, m, alpha: 0.0 }
    }

    pub fn intervention(d: usize, alpha: f64) -> Self {
        Self { tag: FamilyTag::I, d, m: 0, alpha }
    }

    /// Parses `L`, `I` or `M<k>`; `k` must be in the sweep unless `permissive`.
    pub fn parse(s: &str, d: usize, alpha: f64, permissive: bool) -> Result<Self, ModelError> {
        let fam = match s {
            "L" => Self::label_assisted(d),
            "I" => Self::intervention(d, alpha),
            _ => {
                let k: usize = s
                    .strip_prefix('M')
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| ModelError::UnknownFamily(s.to_string()))?;
                if !permissive && !MEMORY_SIZES.contains(&k) {
                    return Err(ModelError::MemoryNotAllowed(k));
                }
                Self::memory(d, k)
            }
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.tag == FamilyTag::I && (self.alpha.is_nan() || self.alpha <= 0.0) {
            return Err(ModelError::BadAlpha(self.alpha));
        }
        Ok(())
    }

    /// Short name used in tables and paths: `L`, `I`, `M16`, ...
    pub fn label(&self) -> String {
        match self.tag {
            FamilyTag::L => "L".into(),
            FamilyTag::I => "I".into(),
            FamilyTag::M => format!("M{}", self.m),
        }
    }

    pub fn recurrent_size(&self) -> usize {
        match self.tag {
            FamilyTag::M => self.d + self.m,
            _ => self.d,
        }
    }

    pub fn input_size(&self) -> usize {
        match self.tag {
            FamilyTag::L => PATCH_FEATURES + CONTEXT_FEATURES,
            _ => PATCH_FEATURES,
        }
    }

    /// Closed-form scalar parameter count.
    pub fn param_count(&self) -> usize {
        let h = self.recurrent_size();
        let encoder = ENCODER_WIDTH * self.input_size() + ENCODER_WIDTH;
        let lstm = 4 * h * (ENCODER_WIDTH + h + 1);
        let heads = Action::COUNT * h + Action::COUNT + h + 1;
        let intervention = if self.tag == FamilyTag::I { 2 * self.d * self.d } else { 0 };
        encoder + lstm + heads + intervention
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, DEFAULT_D, DEFAULT_ALPHA, false)
    }
}

/// Independent random streams derived from one run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init = 1,
    Rollout = 2,
    Probe = 3,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// LSTM carry: output `h` and cell `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hidden {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Hidden {
    pub fn zeros(size: usize) -> Self {
        Self { h: vec![0.0; size], c: vec![0.0; size] }
    }
}

/// Output of one recurrent step: the latent `z` (the LSTM output) and the carry.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub z: Vec<f64>,
    pub hidden: Hidden,
}

#[derive(Debug, Clone, Copy)]
struct Ids {
    enc_w: ParamId,
    enc_b: ParamId,
    w_x: ParamId,
    w_h: ParamId,
    b: ParamId,
    pi_w: ParamId,
    pi_b: ParamId,
    v_w: ParamId,
    v_b: ParamId,
    /// W_A, W_B for family I.
    w_ctx: Option<[ParamId; 2]>,
}

/// A family plus its weights.
#[derive(Debug, Clone)]
pub struct Model {
    family: ModelFamily,
    store: ParamStore,
    ids: Ids,
}

pub enum ActMode<'a> {
    Greedy,
    Sample(&'a mut dyn RngCore),
}

#[derive(Debug, Clone)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub probs: [f64; 4],
    /// Pre-intervention latent and the carry for the next step.
    pub latent: LatentState,
    /// Latent fed to the heads (post-intervention for I).
    pub z_post: Vec<f64>,
}

/// Tape handles produced by [`Model::step_on_tape`].
#[derive(Debug, Clone, Copy)]
pub struct TapeStep {
    pub log_probs: Var,
    pub probs: Var,
    pub value: Var,
    pub z: Var,
    pub z_post: Var,
    pub h: Var,
    pub c: Var,
}

fn uniform(rng: &mut impl Rng, n: usize, k: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-k..k)).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Raw model input: patch one-hot, plus the context one-hot for `L`.
pub fn input_vector(family: &ModelFamily, obs: &Observation) -> Vec<f64> {
    let mut x = obs.patch_one_hot().to_vec();
    if family.tag == FamilyTag::L {
        let mut ctx = [0.0; CONTEXT_FEATURES];
        ctx[obs.context.index()] = 1.0;
        x.extend_from_slice(&ctx);
    }
    x
}

/// Index of the largest probability; ties go to the lowest index.
pub fn greedy_index(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Inverse-CDF draw from `probs`.
pub fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

impl Model {
    /// Seeded initialization: uniform(±1/√fan_in) weights, forget-gate bias
    /// +1, and exactly zero intervention operators.
    pub fn init(family: ModelFamily, seed: u64) -> Result<Model, ModelError> {
        family.validate()?;
        let mut rng = stream_rng(seed, Stream::Init);
        let h = family.recurrent_size();
        let n_in = family.input_size();
        let mut store = ParamStore::new();

        let k_enc = 1.0 / (n_in as f64).sqrt();
        let enc_w = store.add("encoder.w", ENCODER_WIDTH, n_in, uniform(&mut rng, ENCODER_WIDTH * n_in, k_enc))?;
        let enc_b = store.add("encoder.b", ENCODER_WIDTH, 1, uniform(&mut rng, ENCODER_WIDTH, k_enc))?;

        let k_x = 1.0 / (ENCODER_WIDTH as f64).sqrt();
        let k_h = 1.0 / (h as f64).sqrt();
        let w_x = store.add("lstm.w_x", 4 * h, ENCODER_WIDTH, uniform(&mut rng, 4 * h * ENCODER_WIDTH, k_x))?;
        let w_h = store.add("lstm.w_h", 4 * h, h, uniform(&mut rng, 4 * h * h, k_h))?;
        let mut bias = uniform(&mut rng, 4 * h, k_h);
        bias[h..2 * h].iter_mut().for_each(|b| *b = FORGET_BIAS);
        let b = store.add("lstm.b", 4 * h, 1, bias)?;

        let pi_w = store.add("policy.w", Action::COUNT, h, uniform(&mut rng, Action::COUNT * h, k_h))?;
        let pi_b = store.add("policy.b", Action::COUNT, 1, uniform(&mut rng, Action::COUNT, k_h))?;
        let v_w = store.add("value.w", 1, h, uniform(&mut rng, h, k_h))?;
        let v_b = store.add("value.b", 1, 1, uniform(&mut rng, 1, k_h))?;

        let w_ctx = if family.tag == FamilyTag::I {
            let d = family.d;
            Some([
                store.add("intervention.w_a", d, d, vec![0.0; d * d])?,
                store.add("intervention.w_b", d, d, vec![0.0; d * d])?,
            ])
        } else {
            None
        };
        let ids = Ids { enc_w, enc_b, w_x, w_h, b, pi_w, pi_b, v_w, v_b, w_ctx };
        Ok(Model { family, store, ids })
    }

    pub fn family(&self) -> &ModelFamily {
        &self.family
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Replaces the named parameter's values (used by tests and tooling).
    pub fn set_param(&mut self, name: &str, values: Vec<f64>) {
        let id = self.store.id(name).unwrap_or_else(|| panic!("no parameter named {name}"));
        let p = self.store.param_mut(id);
        assert_eq!(p.value.len(), values.len(), "wrong length for {name}");
        p.value = values;
    }

    pub fn initial_hidden(&self) -> Hidden {
        Hidden::zeros(self.family.recurrent_size())
    }

    fn weights(&self, id: ParamId) -> &[f64] {
        &self.store.param(id).value
    }

    fn affine(&self, w: ParamId, b: ParamId, x: &[f64]) -> Vec<f64> {
        let p = self.store.param(w);
        let mut out = vec![0.0; p.rows];
        matvec_into(&p.value, p.rows, p.cols, x, &mut out);
        out.iter_mut().zip(self.weights(b)).for_each(|(o, b)| *o += b);
        out
    }

    /// φ: one affine + tanh layer to [`ENCODER_WIDTH`] features.
    pub fn encode_obs(&self, obs: &Observation) -> Vec<f64> {
        let x = input_vector(&self.family, obs);
        let mut out = self.affine(self.ids.enc_w, self.ids.enc_b, &x);
        out.iter_mut().for_each(|v| *v = v.tanh());
        out
    }

    /// Standard LSTM cell (gate order i, f, g, o).
    pub fn recurrent_step(&self, features: &[f64], hidden: &Hidden) -> LatentState {
        let h = self.family.recurrent_size();
        let mut gates = self.affine(self.ids.w_x, self.ids.b, features);
        let wh = self.store.param(self.ids.w_h);
        let mut rec = vec![0.0; 4 * h];
        matvec_into(&wh.value, wh.rows, wh.cols, &hidden.h, &mut rec);
        gates.iter_mut().zip(&rec).for_each(|(g, r)| *g += r);
        let mut c = vec![0.0; h];
        let mut out = vec![0.0; h];
        for k in 0..h {
            let i = sigmoid(gates[k]);
            let f = sigmoid(gates[h + k]);
            let g = gates[2 * h + k].tanh();
            let o = sigmoid(gates[3 * h + k]);
            c[k] = f * hidden.c[k] + i * g;
            out[k] = o * c[k].tanh();
        }
        LatentState { z: out.clone(), hidden: Hidden { h: out, c } }
    }

    /// `z + α W_c z` for family I; identity for L and M.
    pub fn intervene(&self, z: &[f64], c: Context) -> Vec<f64> {
        match self.ids.w_ctx {
            Some(ws) => {
                let p = self.store.param(ws[c.index()]);
                let mut wz = vec![0.0; p.rows];
                matvec_into(&p.value, p.rows, p.cols, z, &mut wz);
                z.iter().zip(&wz).map(|(zi, wi)| zi + self.family.alpha * wi).collect()
            }
            None => z.to_vec(),
        }
    }

    /// Action distribution and state value from the head input.
    pub fn policy_value(&self, z_post: &[f64]) -> ([f64; 4], f64) {
        let logits = self.affine(self.ids.pi_w, self.ids.pi_b, z_post);
        let probs = softmax(&logits);
        let value = self.affine(self.ids.v_w, self.ids.v_b, z_post)[0];
        ([probs[0], probs[1], probs[2], probs[3]], value)
    }

    pub fn act(&self, obs: &Observation, hidden: &Hidden, mode: ActMode<'_>) -> ActOutput {
        let features = self.encode_obs(obs);
        let latent = self.recurrent_step(&features, hidden);
        let z_post = self.intervene(&latent.z, obs.context);
        let (probs, value) = self.policy_value(&z_post);
        let idx = match mode {
            ActMode::Greedy => greedy_index(&probs),
            ActMode::Sample(rng) => sample_index(&probs, rng),
        };
        ActOutput {
            action: Action::from_index(idx),
            log_prob: probs[idx].ln(),
            value,
            probs,
            latent,
            z_post,
        }
    }

    fn tape_affine(&self, tape: &mut Tape, b: &Bindings, w: ParamId, bias: ParamId, x: Var) -> Var {
        let wx = tape.matvec(b.var(w), x);
        tape.add(wx, b.var(bias))
    }

    /// Same computation as [`Model::act`] recorded on a tape, with the
    /// carry given as tape nodes.
    pub fn step_on_tape(&self, tape: &mut Tape, b: &Bindings, obs: &Observation, h_prev: Var, c_prev: Var) -> TapeStep {
        let hs = self.family.recurrent_size();
        let x = tape.constant_vec(input_vector(&self.family, obs));
        let enc = self.tape_affine(tape, b, self.ids.enc_w, self.ids.enc_b, x);
        let features = tape.tanh(enc);

        let gx = self.tape_affine(tape, b, self.ids.w_x, self.ids.b, features);
        let gh = tape.matvec(b.var(self.ids.w_h), h_prev);
        let gates = tape.add(gx, gh);
        let gi = tape.slice(gates, 0..hs);
        let gf = tape.slice(gates, hs..2 * hs);
        let gg = tape.slice(gates, 2 * hs..3 * hs);
        let go = tape.slice(gates, 3 * hs..4 * hs);
        let i = tape.sigmoid(gi);
        let f = tape.sigmoid(gf);
        let g = tape.tanh(gg);
        let o = tape.sigmoid(go);
        let keep = tape.hadamard(f, c_prev);
        let write = tape.hadamard(i, g);
        let c = tape.add(keep, write);
        let tc = tape.tanh(c);
        let h = tape.hadamard(o, tc);

        let z_post = match self.ids.w_ctx {
            Some(ws) => {
                let wz = tape.matvec(b.var(ws[obs.context.index()]), h);
                let scaled = tape.scale(wz, self.family.alpha);
                tape.add(h, scaled)
            }
            None => h,
        };
        let logits = self.tape_affine(tape, b, self.ids.pi_w, self.ids.pi_b, z_post);
        let log_probs = tape.log_softmax(logits);
        let probs = tape.softmax(logits);
        let v = self.tape_affine(tape, b, self.ids.v_w, self.ids.v_b, z_post);
        let value = tape.pick(v, 0);
        TapeStep { log_probs, probs, value, z: h, z_post, h, c }
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let meta = serde_json::json!({
            "family": self.family,
            "label": self.family.label(),
            "seed": seed,
        });
        self.store.to_checkpoint(meta)
    }

    /// Restores a model and its seed; parameter names and shapes must match the family layout.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Model, u64), ModelError> {
        let family: ModelFamily = serde_json::from_value(ckpt.meta["family"].clone())
            .map_err(|e| ModelError::BadMeta(e.to_string()))?;
        let seed = ckpt.meta["seed"].as_u64().ok_or_else(|| ModelError::BadMeta("missing seed".into()))?;
        let mut model = Model::init(family, seed)?;
        let loaded = ParamStore::from_checkpoint(ckpt)?;
        if loaded.params().len() != model.store.params().len() {
            return Err(ModelError::BadMeta("parameter list does not match family".into()));
        }
        for (dst, src) in model.store.params_mut().iter_mut().zip(loaded.params()) {
            if dst.name != src.name || (dst.rows, dst.cols) != (src.rows, src.cols) {
                return Err(ModelError::BadMeta(format!("unexpected parameter {}", src.name)));
            }
            dst.value = src.value.clone();
        }
        Ok((model, seed))
    }
}
