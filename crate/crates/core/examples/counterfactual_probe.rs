//! Train an intervention model and a memory model briefly, then compare how
//! much information each carries about the context in phase 1.
//!
//! ```text
//! cargo run --release --example counterfactual_probe -- 60000
//! ```
//! The memory model has no context pathway, so its policy is identical under
//! both contexts; any information it shows comes from the outcome labels
//! alone, and freezing the labels to the factual context gives exactly zero.

use ctxswitch::gridworld::{Condition, Context, Env, EnvConfig, MazeSpec};
use ctxswitch::infoprobe::{collect_states, counterfactual_policy, mean_information, Labels, OutcomeDef, Prior};
use ctxswitch::models::{stream_rng, ModelFamily, Stream};
use ctxswitch::training::{train_run, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let steps: u64 = std::env::args().nth(1).map_or(Ok(60_000), |s| s.parse())?;
    let maze = MazeSpec::default_maze();
    let cond = Condition::AB25;
    let env = Env::new(maze.clone(), cond, EnvConfig::default())?;

    for family in [ModelFamily::intervention(32, 0.1), ModelFamily::memory(32, 16)] {
        let mut cfg = TrainConfig::new(cond, family, 0);
        cfg.total_env_steps = steps;
        let model = train_run(&cfg, &maze)?.model;
        let records = collect_states(&env, &model, 1000, 1000, &mut stream_rng(0, Stream::Probe))?;
        let gap = records
            .iter()
            .map(|r| {
                let a = counterfactual_policy(&model, r, Context::A);
                let b = counterfactual_policy(&model, r, Context::B);
                a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        println!("{} after {steps} steps, {} phase-1 records, max |pi_A - pi_B| = {gap:.4}", family.label(), records.len());
        for outcome in OutcomeDef::ALL {
            let bits = mean_information(&model, &maze, &records, outcome, Prior::UNIFORM, Labels::Counterfactual);
            let frozen = mean_information(&model, &maze, &records, outcome, Prior::UNIFORM, Labels::Factual);
            println!("  {outcome:<10} I(C;O|S) = {bits:.4} bits, labels frozen = {frozen:.4} bits");
        }
    }
    Ok(())
}
