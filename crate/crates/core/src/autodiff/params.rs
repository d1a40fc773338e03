use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Tensor, Var};
use super::AutodiffError;

pub const CHECKPOINT_FORMAT: &str = "ctxswitch-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    /// Adam first and second moment accumulators.
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// Named dense parameters plus their optimizer slots, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: BTreeMap<String, usize>,
    /// Number of optimizer updates applied so far.
    pub step: u64,
}

/// Tape handles for every parameter of a store, in store order.
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: Vec<Var>,
}

impl Bindings {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, rows: usize, cols: usize, value: Vec<f64>) -> Result<ParamId, AutodiffError> {
        if self.index.contains_key(name) {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        if value.len() != rows * cols {
            return Err(AutodiffError::ShapeMismatch { name: name.to_string(), expected: rows * cols, found: value.len() });
        }
        let n = value.len();
        self.params.push(Param {
            name: name.to_string(),
            rows,
            cols,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        let id = self.params.len() - 1;
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.id(name).map(|id| &self.params[id.0])
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Copies every parameter onto `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let vars = self
            .params
            .iter()
            .map(|p| tape.leaf(Tensor::from_vec(p.rows, p.cols, p.value.clone())))
            .collect();
        Bindings { vars }
    }

    /// Adds the tape gradients of bound leaves into the store's grad buffers.
    pub fn accumulate_grads(&mut self, tape: &Tape, bindings: &Bindings) {
        for (p, &var) in self.params.iter_mut().zip(&bindings.vars) {
            for (g, x) in p.grad.iter_mut().zip(tape.grad(var)) {
                *g += x;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.params.iter_mut().for_each(|p| p.grad.iter_mut().for_each(|g| *g = 0.0));
    }

    pub fn grad_norm(&self) -> f64 {
        self.params.iter().flat_map(|p| &p.grad).map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.value.iter().all(|x| x.is_finite()))
    }

    /// Parameter values only, as a serializable checkpoint.
    pub fn to_checkpoint(&self, meta: serde_json::Value) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            meta,
            params: self
                .params
                .iter()
                .map(|p| ParamRecord { name: p.name.clone(), shape: [p.rows, p.cols], values: p.value.clone() })
                .collect(),
        }
    }

    /// Rebuilds a store (with fresh optimizer slots) from a checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<ParamStore, AutodiffError> {
        if ckpt.format != CHECKPOINT_FORMAT || ckpt.version != CHECKPOINT_VERSION {
            return Err(AutodiffError::CheckpointVersion { format: ckpt.format.clone(), version: ckpt.version });
        }
        let mut store = ParamStore::new();
        for rec in &ckpt.params {
            store.add(&rec.name, rec.shape[0], rec.shape[1], rec.values.clone())?;
        }
        Ok(store)
    }
}

/// On-disk parameter container: a JSON document with a format tag, a
/// version, free-form metadata and a flat list of row-major parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub meta: serde_json::Value,
    pub params: Vec<ParamRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Checkpoint, AutodiffError> {
        serde_json::from_str(text).map_err(|e| AutodiffError::CheckpointParse(e.to_string()))
    }
}
