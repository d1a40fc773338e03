#![allow(dead_code)]

use ctxswitch::gridworld::{
    classify_moves, Action, Cell, Condition, Context, Env, EnvConfig, EnvError, MazeSpec, MoveClass, Order, Transition,
};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn condition() -> impl Strategy<Value = Condition> {
    (prop_oneof![Just(Order::AB), Just(Order::BA)], 1usize..80).prop_map(|(o, t)| Condition::new(o, t))
}

pub fn actions(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Action>> {
    prop::collection::vec((0usize..4).prop_map(Action::from_index), len)
}

pub fn env(cond: Condition) -> Env {
    Env::new(MazeSpec::default_maze(), cond, EnvConfig::default()).unwrap()
}

/// Steps until the sequence runs out or the episode ends.
pub fn play(env: &Env, seq: &[Action]) -> (Context, Vec<Transition>) {
    let (mut s, obs) = env.reset();
    let mut out = Vec::new();
    for &a in seq {
        if s.done {
            break;
        }
        let tr = env.step(&s, a).unwrap();
        s = tr.state;
        out.push(tr);
    }
    (obs.context, out)
}

pub fn gating(cond: Condition, seq: &[Action]) -> Result<(), TestCaseError> {
    let (_, trs) = play(&env(cond), seq);
    for tr in &trs {
        prop_assert!(!tr.state.phase1_success || tr.state.phase0_success);
        prop_assert!(tr.state.phase <= 1);
    }
    Ok(())
}

pub fn single_flip(cond: Condition, seq: &[Action]) -> Result<(), TestCaseError> {
    let (first, trs) = play(&env(cond), seq);
    let mut contexts = vec![first];
    contexts.extend(trs.iter().map(|tr| tr.obs.context));
    let flips: Vec<usize> = (1..contexts.len()).filter(|&i| contexts[i] != contexts[i - 1]).collect();
    prop_assert!(flips.len() <= 1);
    // observation i is taken at t = i
    let reached_switch = contexts.len() > cond.t_switch;
    prop_assert_eq!(flips.len(), usize::from(reached_switch));
    if reached_switch {
        prop_assert_eq!(flips[0], cond.t_switch);
        prop_assert_eq!(contexts[cond.t_switch], first.flipped());
    }
    Ok(())
}

pub fn deterministic(cond: Condition, seq: &[Action]) -> Result<(), TestCaseError> {
    let e = env(cond);
    prop_assert_eq!(play(&e, seq), play(&e, seq));
    Ok(())
}

pub fn ends_by_horizon(cond: Condition, seq: &[Action]) -> Result<(), TestCaseError> {
    let e = env(cond);
    let (_, trs) = play(&e, seq);
    let last = trs.last().unwrap();
    prop_assert!(last.state.done);
    prop_assert!(trs.len() <= 80);
    prop_assert!(matches!(e.step(&last.state, Action::Up), Err(EnvError::EpisodeFinished)));
    Ok(())
}

pub fn label_duality(row: usize, col: usize) -> Result<(), TestCaseError> {
    let maze = MazeSpec::default_maze();
    let pos = Cell::new(row, col);
    let a = classify_moves(&maze, pos, Context::A);
    let b = classify_moves(&maze, pos, Context::B);
    let swap = |m: MoveClass| match m {
        MoveClass::Target => MoveClass::Wrong,
        MoveClass::Wrong => MoveClass::Target,
        MoveClass::Other => MoveClass::Other,
    };
    prop_assert_eq!(a.map(swap), b);
    Ok(())
}
