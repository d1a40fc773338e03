//! Independent reference computations used by the `gradcheck` and `oracle`
//! commands and by the test suites.
//!
//! Nothing here calls the code paths it is meant to check: the maze
//! distances are computed by Bellman–Ford relaxation over the raw text, and
//! the mutual information by summing over the explicit joint table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, ParamStore, Tape, Var};
use crate::gridworld::{target_of, Action, Condition, Env, EnvConfig, MazeSpec, Order};
use crate::models::{stream_rng, Model, ModelFamily, Stream};
use crate::training::{a2c_loss_bound, rollout_episode, LossCoefs, Trajectory};

/// Relative-error bound for every gradient case.
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const GRAD_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCase {
    pub name: String,
    pub report: GradCheckReport,
}

impl GradCase {
    pub fn passed(&self) -> bool {
        self.report.max_rel_error <= GRAD_TOLERANCE
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

type PrimitiveLoss = fn(&mut Tape, &[Var], Var) -> Var;

fn primitive_cases() -> Vec<(&'static str, PrimitiveLoss)> {
    // params: a (5), b (5), m (3x5), pos (5, positive); `r` is a fixed 5-vector
    vec![
        ("matvec", |t, p, _| {
            let y = t.matvec(p[2], p[0]);
            let s = t.tanh(y);
            t.sum(s)
        }),
        ("add", |t, p, r| {
            let y = t.add(p[0], p[1]);
            t.dot(r, y)
        }),
        ("sub", |t, p, r| {
            let y = t.sub(p[0], p[1]);
            let y = t.square(y);
            t.dot(r, y)
        }),
        ("hadamard", |t, p, r| {
            let y = t.hadamard(p[0], p[1]);
            t.dot(r, y)
        }),
        ("tanh", |t, p, r| {
            let y = t.tanh(p[0]);
            t.dot(r, y)
        }),
        ("sigmoid", |t, p, r| {
            let y = t.sigmoid(p[1]);
            t.dot(r, y)
        }),
        ("scale", |t, p, r| {
            let y = t.scale(p[0], -1.7);
            let y = t.hadamard(y, p[1]);
            t.dot(r, y)
        }),
        ("log", |t, p, r| {
            let y = t.log(p[3]);
            t.dot(r, y)
        }),
        ("concat", |t, p, _| {
            let y = t.concat(p[0], p[1]);
            let y = t.sigmoid(y);
            let z = t.slice(y, 2..9);
            let z = t.square(z);
            t.sum(z)
        }),
        ("slice", |t, p, _| {
            let y = t.slice(p[0], 1..4);
            let z = t.slice(p[1], 0..3);
            t.dot(y, z)
        }),
        ("softmax", |t, p, r| {
            let y = t.softmax(p[0]);
            t.dot(r, y)
        }),
        ("log_softmax", |t, p, r| {
            let y = t.log_softmax(p[1]);
            t.dot(r, y)
        }),
        ("dot", |t, p, _| {
            let y = t.dot(p[0], p[1]);
            t.square(y)
        }),
        ("pick", |t, p, _| {
            let y = t.softmax(p[0]);
            let z = t.pick(y, 2);
            t.log(z)
        }),
        ("entropy", |t, p, _| {
            let pr = t.softmax(p[1]);
            let lp = t.log_softmax(p[1]);
            t.dot(pr, lp)
        }),
    ]
}

fn primitive_store(seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    store.add("a", 5, 1, random_vec(&mut rng, 5, -1.5, 1.5)).unwrap();
    store.add("b", 5, 1, random_vec(&mut rng, 5, -1.5, 1.5)).unwrap();
    store.add("m", 3, 5, random_vec(&mut rng, 15, -1.0, 1.0)).unwrap();
    store.add("pos", 5, 1, random_vec(&mut rng, 5, 0.5, 2.0)).unwrap();
    store
}

fn short_episode(model: &Model, cond: Condition, steps: usize, seed: u64) -> Trajectory {
    let env = Env::new(MazeSpec::default_maze(), cond, EnvConfig::default()).unwrap();
    let mut traj = rollout_episode(&env, model, &mut stream_rng(seed, Stream::Rollout));
    traj.steps.truncate(steps);
    traj
}

fn randomized_intervention(seed: u64) -> Model {
    let mut model = Model::init(ModelFamily::intervention(32, 0.1), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for name in ["intervention.w_a", "intervention.w_b"] {
        model.set_param(name, random_vec(&mut rng, 32 * 32, -0.5, 0.5));
    }
    model
}

/// Every tape primitive, one LSTM step, the intervention path and the full
/// actor-critic loss for each family, checked against central differences.
pub fn gradient_suite(seed: u64) -> Vec<GradCase> {
    let mut cases = Vec::new();
    let store = primitive_store(seed);
    let r: Vec<f64> = random_vec(&mut ChaCha8Rng::seed_from_u64(seed + 1), 5, -1.0, 1.0);
    for (name, f) in primitive_cases() {
        let r = r.clone();
        let report = grad_check(&store, GRAD_EPS, 64, seed, |tape, b| {
            let rv = tape.constant_vec(r.clone());
            f(tape, b.vars(), rv)
        });
        cases.push(GradCase { name: format!("primitive/{name}"), report });
    }

    // switch after two steps so a three-step episode sees both contexts
    let cond = Condition::new(Order::AB, 2);

    let lstm = Model::init(ModelFamily::label_assisted(32), seed).unwrap();
    let one = short_episode(&lstm, cond, 1, seed);
    let obs = one.steps[0].obs;
    let report = grad_check(lstm.params(), GRAD_EPS, 24, seed, |tape, b| {
        let h = tape.constant_vec(vec![0.2; 32]);
        let c = tape.constant_vec(vec![-0.3; 32]);
        let step = lstm.step_on_tape(tape, b, &obs, h, c);
        let lp = tape.pick(step.log_probs, 1);
        let hc = tape.dot(step.h, step.c);
        let v = tape.square(step.value);
        let s = tape.add(lp, hc);
        tape.add(s, v)
    });
    cases.push(GradCase { name: "lstm_step".into(), report });

    let inter = randomized_intervention(seed);
    let two = short_episode(&inter, cond, 3, seed);
    let obs_b = two.steps[2].obs;
    let report = grad_check(inter.params(), GRAD_EPS, 24, seed, |tape, b| {
        let h = tape.constant_vec(vec![0.1; 32]);
        let c = tape.constant_vec(vec![0.4; 32]);
        let step = inter.step_on_tape(tape, b, &obs_b, h, c);
        let lp = tape.pick(step.log_probs, 3);
        let zp = tape.sum(step.z_post);
        let s = tape.add(lp, step.value);
        tape.add(s, zp)
    });
    cases.push(GradCase { name: "intervention_path".into(), report });

    let families: [(&str, Model); 3] = [
        ("L", Model::init(ModelFamily::label_assisted(32), seed).unwrap()),
        ("M16", Model::init(ModelFamily::memory(32, 16), seed).unwrap()),
        ("I", randomized_intervention(seed)),
    ];
    for (label, model) in families {
        let traj = short_episode(&model, cond, 3, seed);
        let report = grad_check(model.params(), GRAD_EPS, 24, seed, |tape, b| {
            a2c_loss_bound(tape, &model, b.clone(), &traj, 0.99, LossCoefs::default()).loss
        });
        cases.push(GradCase { name: format!("a2c_loss/{label}"), report });
    }
    cases
}

/// Shortest-path length between two marker characters, by Bellman–Ford
/// relaxation over the raw maze text.
pub fn brute_force_distance(text: &str, from: char, to: char) -> Option<u32> {
    let rows: Vec<Vec<char>> = text.lines().filter(|l| !l.is_empty()).map(|l| l.chars().collect()).collect();
    let cells: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|r| (0..rows[r].len()).map(move |c| (r, c)))
        .filter(|&(r, c)| rows[r][c] != '#')
        .collect();
    let find = |ch| cells.iter().position(|&(r, c)| rows[r][c] == ch);
    let (src, dst) = (find(from)?, find(to)?);
    let mut dist = vec![u32::MAX; cells.len()];
    dist[src] = 0;
    for _ in 0..cells.len() {
        let mut changed = false;
        for i in 0..cells.len() {
            for j in 0..cells.len() {
                let (a, b) = (cells[i], cells[j]);
                let adjacent = a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1;
                if adjacent && dist[i] != u32::MAX && dist[i] + 1 < dist[j] {
                    dist[j] = dist[i] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    (dist[dst] != u32::MAX).then_some(dist[dst])
}

/// `I(C;O)` in bits from the joint table `p(c, o) = w_c p_c(o)`.
pub fn joint_table_mi(p0: &[f64], p1: &[f64], w0: f64, w1: f64) -> f64 {
    let rows = [(w0, p0), (w1, p1)];
    let marginal: Vec<f64> = (0..p0.len()).map(|o| w0 * p0[o] + w1 * p1[o]).collect();
    let mut mi = 0.0;
    for (w, p) in rows {
        for (o, &po) in p.iter().enumerate() {
            let joint = w * po;
            if joint > 0.0 {
                mi += joint * (joint / (w * marginal[o])).log2();
            }
        }
    }
    mi
}

/// Hand-scripted solution: shortest path to the phase-0 target, idle with
/// blocked moves, then a shortest path to the phase-1 target timed to
/// arrive after the switch.
pub fn scripted_optimal_actions(maze: &MazeSpec, cond: Condition) -> Vec<Action> {
    let first = maze.goal_cell(target_of(cond.context_at(0)));
    let second = maze.goal_cell(target_of(cond.context_at(cond.t_switch)));
    let to_first = maze.shortest_path(maze.start, first).expect("reachable");
    let to_second = maze.shortest_path(first, second).expect("reachable");
    let idle = Action::ALL.into_iter().find(|&a| maze.move_target(first, a).is_none()).expect("goal cell has a wall");
    // the entering move happens at step index len - 1 and must be >= t_switch
    let wait = (cond.t_switch + 1).saturating_sub(to_first.len() + to_second.len());
    let mut actions = to_first;
    actions.extend(std::iter::repeat_n(idle, wait));
    actions.extend(to_second);
    actions
}
