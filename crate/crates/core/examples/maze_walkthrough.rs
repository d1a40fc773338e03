//! Step through the shipped maze with a scripted solution and print what
//! the agent sees and earns on every step.
//!
//! ```text
//! cargo run --example maze_walkthrough -- BA30
//! ```

use ctxswitch::gridworld::{Condition, Env, EnvConfig, MazeSpec, CellClass};
use ctxswitch::oracles::scripted_optimal_actions;

fn glyph(c: CellClass) -> char {
    match c {
        CellClass::WallOrOob => '#',
        CellClass::Free => '.',
        CellClass::G1 => '1',
        CellClass::G2 => '2',
        CellClass::SelfCenter => '@',
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cond: Condition = std::env::args().nth(1).as_deref().unwrap_or("AB25").parse()?;
    let maze = MazeSpec::default_maze();
    let env = Env::new(maze.clone(), cond, EnvConfig::default())?;
    println!("{maze}");
    println!("condition {cond}: context flips at t = {}", cond.t_switch);

    let (mut state, mut obs) = env.reset();
    let mut total = 0.0;
    for a in scripted_optimal_actions(&maze, cond) {
        let patch: String = obs.patch.chunks(3).map(|row| row.iter().map(|&c| glyph(c)).collect::<String>()).collect::<Vec<_>>().join("/");
        let tr = env.step(&state, a)?;
        total += tr.reward;
        let mut notes = Vec::new();
        if tr.events.blocked {
            notes.push("blocked");
        }
        if tr.events.reached_target {
            notes.push("target");
        }
        if tr.events.reached_wrong {
            notes.push("wrong goal");
        }
        if tr.events.phase_advanced {
            notes.push("context switch");
        }
        println!(
            "t={:>2} ctx={:?} patch={patch} {:<5?} -> ({},{}) r={:+.3} {}",
            state.t,
            obs.context,
            a,
            tr.state.pos.row,
            tr.state.pos.col,
            tr.reward,
            notes.join(", ")
        );
        state = tr.state;
        obs = tr.obs;
    }
    println!(
        "phase0={} phase1={} done={} return={total:.3}",
        state.phase0_success, state.phase1_success, state.done
    );
    Ok(())
}
