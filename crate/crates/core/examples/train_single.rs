//! Train one model family on one condition and print its learning curve.
//!
//! ```text
//! cargo run --release --example train_single -- I BA30 0 300000
//! ```
//! Arguments: family (L, I, M8, M16, M32, M64), condition, seed, env steps.

use std::time::Instant;

use ctxswitch::gridworld::{Condition, MazeSpec};
use ctxswitch::models::ModelFamily;
use ctxswitch::training::{train_run, TrainConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let family: ModelFamily = args.first().map_or("L", String::as_str).parse()?;
    let condition: Condition = args.get(1).map_or("AB25", String::as_str).parse()?;
    let seed: u64 = args.get(2).map_or(Ok(0), |s| s.parse())?;
    let steps: u64 = args.get(3).map_or(Ok(100_000), |s| s.parse())?;

    let mut cfg = TrainConfig::new(condition, family, seed);
    cfg.total_env_steps = steps;
    let started = Instant::now();
    let out = train_run(&cfg, &MazeSpec::default_maze())?;
    print!("{}", out.curve.to_csv());
    println!(
        "# {family} {condition} seed {seed}: {} steps, {} episodes, {:.1}s, final success_both={}",
        out.env_steps,
        out.episodes,
        started.elapsed().as_secs_f64(),
        out.final_metrics.success_both
    );
    Ok(())
}
