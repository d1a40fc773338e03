//! Context-switching gridworld benchmark.

pub mod autodiff;
pub mod gridworld;
pub mod models;
pub mod evaluation;
pub mod training;
pub mod infoprobe;
pub mod oracles;
pub mod harness;
