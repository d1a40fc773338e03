//! Dense reverse-mode differentiation for small recurrent networks.
//!
//! A [`Tape`] records one computation (typically a whole episode) and
//! [`Tape::backward`] walks it in reverse. Parameters live in a
//! [`ParamStore`] and are copied onto each tape as leaves with
//! [`ParamStore::bind`]; gradients flow back with
//! [`ParamStore::accumulate_grads`] and are consumed by [`adam_update`].

mod check;
mod optim;
mod params;
mod tape;

use thiserror::Error;

pub use check::{grad_check, GradCheckReport};
pub use optim::{adam_update, AdamConfig, UpdateStats};
pub use params::{Bindings, Checkpoint, Param, ParamId, ParamRecord, ParamStore, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use tape::{log_softmax, matvec_into, softmax, Tape, Tensor, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("parameter {0:?} registered twice")]
    DuplicateParam(String),
    #[error("parameter {name:?} expects {expected} values, got {found}")]
    ShapeMismatch { name: String, expected: usize, found: usize },
    #[error("non-finite gradient in parameter {0:?}")]
    NonFiniteGradient(String),
    #[error("unsupported checkpoint {format:?} version {version}")]
    CheckpointVersion { format: String, version: u32 },
    #[error("malformed checkpoint: {0}")]
    CheckpointParse(String),
}
