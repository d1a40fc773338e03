//! Deterministic 9×9 maze with one in-episode context switch.
//!
//! The agent sees a local 3×3 patch around itself. A binary context token
//! selects which of the two goals is the current target; the token flips
//! once at `t_switch`. Credit for the second phase is only paid when the
//! first phase was solved.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GRID: usize = 9;
pub const PATCH_CELLS: usize = 9;
pub const CELL_CLASSES: usize = 5;
/// One-hot width of a patch: 9 cells × 5 classes.
pub const PATCH_FEATURES: usize = PATCH_CELLS * CELL_CLASSES;

/// The maze shipped with the crate.
pub const DEFAULT_MAZE: &str = include_str!("../assets/default_maze.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    fn offset(self, dr: isize, dc: isize) -> Option<Cell> {
        let r = self.row as isize + dr;
        let c = self.col as isize + dc;
        if (0..GRID as isize).contains(&r) && (0..GRID as isize).contains(&c) {
            Some(Cell::new(r as usize, c as usize))
        } else {
            None
        }
    }

    fn index(self) -> usize {
        self.row * GRID + self.col
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Goal {
    G1,
    G2,
}

impl Goal {
    pub fn other(self) -> Goal {
        match self {
            Goal::G1 => Goal::G2,
            Goal::G2 => Goal::G1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Context {
    A,
    B,
}

impl Context {
    pub const ALL: [Context; 2] = [Context::A, Context::B];

    pub fn flipped(self) -> Context {
        match self {
            Context::A => Context::B,
            Context::B => Context::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Context::A => 0,
            Context::B => 1,
        }
    }
}

/// Target goal under a context. A pairs with G1 and B with G2 in both orders.
pub fn target_of(c: Context) -> Goal {
    match c {
        Context::A => Goal::G1,
        Context::B => Goal::G2,
    }
}

/// The goal that is wrong under `c`.
pub fn wrong_of(c: Context) -> Goal {
    target_of(c).other()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Order {
    AB,
    BA,
}

/// Context order plus the step index at which the context flips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub order: Order,
    pub t_switch: usize,
}

impl Condition {
    pub const AB25: Condition = Condition { order: Order::AB, t_switch: 25 };
    pub const BA30: Condition = Condition { order: Order::BA, t_switch: 30 };

    pub fn new(order: Order, t_switch: usize) -> Self {
        Self { order, t_switch }
    }

    /// Checks `1 <= t_switch < horizon`.
    pub fn validate(&self, horizon: usize) -> Result<(), EnvError> {
        if self.t_switch == 0 || self.t_switch >= horizon {
            return Err(EnvError::BadSwitch { t_switch: self.t_switch, horizon });
        }
        Ok(())
    }

    pub fn context_at(&self, t: usize) -> Context {
        context_at(*self, t)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}{}", self.order, self.t_switch)
    }
}

impl std::str::FromStr for Condition {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EnvError::BadCondition(s.to_string());
        let (order, rest) = if let Some(rest) = s.strip_prefix("AB") {
            (Order::AB, rest)
        } else if let Some(rest) = s.strip_prefix("BA") {
            (Order::BA, rest)
        } else {
            return Err(bad());
        };
        let t_switch = rest.parse().map_err(|_| bad())?;
        Ok(Condition { order, t_switch })
    }
}

pub fn context_at(cond: Condition, t: usize) -> Context {
    let first = match cond.order {
        Order::AB => Context::A,
        Order::BA => Context::B,
    };
    if t < cond.t_switch {
        first
    } else {
        first.flipped()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -1),
            Action::Right => (0, 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Wall,
    Free,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MazeError {
    #[error("expected 9 rows, found {0}")]
    RowCount(usize),
    #[error("row {row} has {len} columns, expected 9")]
    RowLength { row: usize, len: usize },
    #[error("unexpected character {ch:?} at {cell}")]
    BadChar { ch: char, cell: Cell },
    #[error("marker {0:?} is missing")]
    MissingMarker(char),
    #[error("marker {0:?} appears more than once")]
    DuplicateMarker(char),
    #[error("goal {0:?} is not reachable from the start cell")]
    Unreachable(Goal),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("t_switch {t_switch} must satisfy 1 <= t_switch < horizon ({horizon})")]
    BadSwitch { t_switch: usize, horizon: usize },
    #[error("cannot parse condition {0:?} (expected e.g. AB25 or BA30)")]
    BadCondition(String),
    #[error("step called on a finished episode")]
    EpisodeFinished,
}

/// Static maze layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeSpec {
    grid: [[Tile; GRID]; GRID],
    pub start: Cell,
    pub g1: Cell,
    pub g2: Cell,
}

impl MazeSpec {
    pub fn default_maze() -> MazeSpec {
        load_maze(DEFAULT_MAZE).expect("shipped maze is valid")
    }

    pub fn tile(&self, cell: Cell) -> Tile {
        self.grid[cell.row][cell.col]
    }

    pub fn is_free(&self, cell: Cell) -> bool {
        self.tile(cell) == Tile::Free
    }

    pub fn goal_cell(&self, goal: Goal) -> Cell {
        match goal {
            Goal::G1 => self.g1,
            Goal::G2 => self.g2,
        }
    }

    pub fn goal_at(&self, cell: Cell) -> Option<Goal> {
        if cell == self.g1 {
            Some(Goal::G1)
        } else if cell == self.g2 {
            Some(Goal::G2)
        } else {
            None
        }
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..GRID)
            .flat_map(|r| (0..GRID).map(move |c| Cell::new(r, c)))
            .filter(|&c| self.is_free(c))
    }

    /// Cell reached by `a` from `pos`, or `None` when the move is blocked.
    pub fn move_target(&self, pos: Cell, a: Action) -> Option<Cell> {
        let (dr, dc) = a.delta();
        pos.offset(dr, dc).filter(|&n| self.is_free(n))
    }

    /// Breadth-first distances from `src` over free cells; `None` if unreachable.
    pub fn distances_from(&self, src: Cell) -> Vec<Option<u32>> {
        let mut dist = vec![None; GRID * GRID];
        if !self.is_free(src) {
            return dist;
        }
        dist[src.index()] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(cur) = queue.pop_front() {
            let d = dist[cur.index()].unwrap_or(0);
            for a in Action::ALL {
                if let Some(n) = self.move_target(cur, a) {
                    if dist[n.index()].is_none() {
                        dist[n.index()] = Some(d + 1);
                        queue.push_back(n);
                    }
                }
            }
        }
        dist
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<u32> {
        self.distances_from(from)[to.index()]
    }

    /// One shortest path (as actions) from `from` to `to`, preferring lower action indices.
    pub fn shortest_path(&self, from: Cell, to: Cell) -> Option<Vec<Action>> {
        let dist = self.distances_from(to);
        dist[from.index()]?;
        let mut path = Vec::new();
        let mut cur = from;
        while cur != to {
            let d = dist[cur.index()]?;
            let (a, next) = Action::ALL
                .iter()
                .filter_map(|&a| self.move_target(cur, a).map(|n| (a, n)))
                .find(|(_, n)| dist[n.index()] == Some(d - 1))?;
            path.push(a);
            cur = next;
        }
        Some(path)
    }
}

impl fmt::Display for MazeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..GRID {
            for c in 0..GRID {
                let cell = Cell::new(r, c);
                let ch = if cell == self.start {
                    'S'
                } else if cell == self.g1 {
                    '1'
                } else if cell == self.g2 {
                    '2'
                } else if self.is_free(cell) {
                    '.'
                } else {
                    '#'
                };
                write!(f, "{ch}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Parses the maze text format: 9 rows of 9 characters from `# . S 1 2`.
pub fn load_maze(text: &str) -> Result<MazeSpec, MazeError> {
    let rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let rows: &[&str] = match rows.last() {
        Some(&"") => &rows[..rows.len() - 1],
        _ => &rows,
    };
    if rows.len() != GRID {
        return Err(MazeError::RowCount(rows.len()));
    }
    let mut grid = [[Tile::Wall; GRID]; GRID];
    let (mut start, mut g1, mut g2) = (None, None, None);
    for (r, line) in rows.iter().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        if chars.len() != GRID {
            return Err(MazeError::RowLength { row: r, len: chars.len() });
        }
        for (c, &ch) in chars.iter().enumerate() {
            let cell = Cell::new(r, c);
            let slot = match ch {
                '#' => None,
                '.' => {
                    grid[r][c] = Tile::Free;
                    None
                }
                'S' => Some((&mut start, 'S')),
                '1' => Some((&mut g1, '1')),
                '2' => Some((&mut g2, '2')),
                _ => return Err(MazeError::BadChar { ch, cell }),
            };
            if let Some((slot, marker)) = slot {
                if slot.replace(cell).is_some() {
                    return Err(MazeError::DuplicateMarker(marker));
                }
                grid[r][c] = Tile::Free;
            }
        }
    }
    let start = start.ok_or(MazeError::MissingMarker('S'))?;
    let g1 = g1.ok_or(MazeError::MissingMarker('1'))?;
    let g2 = g2.ok_or(MazeError::MissingMarker('2'))?;
    let maze = MazeSpec { grid, start, g1, g2 };
    let dist = maze.distances_from(start);
    for goal in [Goal::G1, Goal::G2] {
        if dist[maze.goal_cell(goal).index()].is_none() {
            return Err(MazeError::Unreachable(goal));
        }
    }
    Ok(maze)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellClass {
    WallOrOob,
    Free,
    G1,
    G2,
    SelfCenter,
}

impl CellClass {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    /// Row-major 3×3 patch centred on the agent.
    pub patch: [CellClass; PATCH_CELLS],
    pub context: Context,
}

impl Observation {
    /// 45-dim one-hot of the patch (context excluded).
    pub fn patch_one_hot(&self) -> [f64; PATCH_FEATURES] {
        let mut out = [0.0; PATCH_FEATURES];
        for (i, class) in self.patch.iter().enumerate() {
            out[i * CELL_CLASSES + class.index()] = 1.0;
        }
        out
    }
}

/// Local 3×3 view around `pos`.
pub fn local_patch(maze: &MazeSpec, pos: Cell) -> [CellClass; PATCH_CELLS] {
    let mut patch = [CellClass::WallOrOob; PATCH_CELLS];
    for dr in -1..=1isize {
        for dc in -1..=1isize {
            let i = ((dr + 1) * 3 + (dc + 1)) as usize;
            patch[i] = if dr == 0 && dc == 0 {
                CellClass::SelfCenter
            } else {
                match pos.offset(dr, dc) {
                    Some(n) if n == maze.g1 => CellClass::G1,
                    Some(n) if n == maze.g2 => CellClass::G2,
                    Some(n) if maze.is_free(n) => CellClass::Free,
                    _ => CellClass::WallOrOob,
                }
            };
        }
    }
    patch
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MoveClass {
    Other,
    Target,
    Wrong,
}

/// Class of the cell each action leads to under context `c`. Blocked moves stay put and count as `Other`.
pub fn classify_moves(maze: &MazeSpec, pos: Cell, c: Context) -> [MoveClass; Action::COUNT] {
    let target = maze.goal_cell(target_of(c));
    let wrong = maze.goal_cell(wrong_of(c));
    Action::ALL.map(|a| match maze.move_target(pos, a) {
        Some(n) if n == target => MoveClass::Target,
        Some(n) if n == wrong => MoveClass::Wrong,
        _ => MoveClass::Other,
    })
}

/// Reward constants and episode length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub horizon: usize,
    pub step_cost: f64,
    pub goal_reward: f64,
    pub wrong_penalty: f64,
    pub blocked_penalty: f64,
    pub shaping_coef: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: 80,
            step_cost: -0.01,
            goal_reward: 1.0,
            wrong_penalty: -0.2,
            blocked_penalty: -0.05,
            shaping_coef: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EpisodeState {
    pub pos: Cell,
    pub t: usize,
    pub phase: u8,
    pub phase0_success: bool,
    pub phase1_success: bool,
    pub done: bool,
    /// Wrong-goal penalty already paid in phase 0 / phase 1.
    pub wrong_paid: [bool; 2],
    /// Phase target entered (rewarded or not); switches shaping off for that phase.
    pub target_entered: [bool; 2],
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEvents {
    pub blocked: bool,
    pub reached_target: bool,
    pub reached_wrong: bool,
    pub phase_advanced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: EpisodeState,
    pub obs: Observation,
    pub reward: f64,
    /// Shaping component already included in `reward`.
    pub shaping: f64,
    pub events: StepEvents,
}

/// A maze, a condition and reward constants bundled for stepping.
#[derive(Debug, Clone)]
pub struct Env {
    maze: MazeSpec,
    cond: Condition,
    cfg: EnvConfig,
    dist_to: [Vec<Option<u32>>; 2],
}

impl Env {
    pub fn new(maze: MazeSpec, cond: Condition, cfg: EnvConfig) -> Result<Self, EnvError> {
        cond.validate(cfg.horizon)?;
        let dist_to = [maze.distances_from(maze.g1), maze.distances_from(maze.g2)];
        Ok(Self { maze, cond, cfg, dist_to })
    }

    pub fn maze(&self) -> &MazeSpec {
        &self.maze
    }

    pub fn condition(&self) -> Condition {
        self.cond
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    pub fn observe(&self, pos: Cell, t: usize) -> Observation {
        Observation { patch: local_patch(&self.maze, pos), context: context_at(self.cond, t) }
    }

    pub fn reset(&self) -> (EpisodeState, Observation) {
        let state = EpisodeState {
            pos: self.maze.start,
            t: 0,
            phase: 0,
            phase0_success: false,
            phase1_success: false,
            done: false,
            wrong_paid: [false; 2],
            target_entered: [false; 2],
        };
        (state, self.observe(state.pos, 0))
    }

    fn potential(&self, goal: Goal, cell: Cell) -> f64 {
        let table = match goal {
            Goal::G1 => &self.dist_to[0],
            Goal::G2 => &self.dist_to[1],
        };
        table[cell.index()].map_or(0.0, f64::from)
    }

    pub fn step(&self, s: &EpisodeState, a: Action) -> Result<Transition, EnvError> {
        if s.done {
            return Err(EnvError::EpisodeFinished);
        }
        let cfg = &self.cfg;
        let c = context_at(self.cond, s.t);
        let phase = s.phase as usize;
        let target = target_of(c);
        let mut next = *s;
        let mut events = StepEvents::default();
        let mut reward = cfg.step_cost;

        let new_pos = match self.maze.move_target(s.pos, a) {
            Some(n) => n,
            None => {
                events.blocked = true;
                reward += cfg.blocked_penalty;
                s.pos
            }
        };
        next.pos = new_pos;

        let shaping_active = !s.target_entered[phase];
        let shaping = if shaping_active {
            cfg.shaping_coef * (self.potential(target, s.pos) - self.potential(target, new_pos))
        } else {
            0.0
        };
        reward += shaping;

        if !events.blocked {
            match self.maze.goal_at(new_pos) {
                Some(g) if g == target => {
                    events.reached_target = true;
                    next.target_entered[phase] = true;
                    if phase == 0 {
                        if !s.phase0_success {
                            next.phase0_success = true;
                            reward += cfg.goal_reward;
                        }
                    } else if s.phase0_success {
                        next.phase1_success = true;
                        reward += cfg.goal_reward;
                    }
                }
                Some(_) => {
                    events.reached_wrong = true;
                    if !s.wrong_paid[phase] {
                        next.wrong_paid[phase] = true;
                        reward += cfg.wrong_penalty;
                    }
                }
                None => {}
            }
        }

        next.t = s.t + 1;
        next.phase = u8::from(next.t >= self.cond.t_switch);
        events.phase_advanced = next.phase != s.phase;
        next.done = next.phase1_success || next.t >= cfg.horizon;
        Ok(Transition {
            obs: self.observe(next.pos, next.t),
            state: next,
            reward,
            shaping,
            events,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const OPEN_ROOM: &str = "#########\n#S.....1#\n#.......#\n#.......#\n#.......#\n#.......#\n#.......#\n#......2#\n#########\n";

    fn open_room_env(cond: Condition) -> Env {
        Env::new(load_maze(OPEN_ROOM).unwrap(), cond, EnvConfig::default()).unwrap()
    }

    #[test]
    fn open_room_loads() {
        let maze = load_maze(OPEN_ROOM).unwrap();
        assert_eq!(maze.start, Cell::new(1, 1));
        assert_eq!(maze.g1, Cell::new(1, 7));
        assert_eq!(maze.g2, Cell::new(7, 7));
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let text = "#########\n#S......#\n#.......#\n#.......#\n#...###.#\n#...#1#.#\n#...###.#\n#......2#\n#########";
        assert_eq!(load_maze(text), Err(MazeError::Unreachable(Goal::G1)));
    }

    #[test]
    fn malformed_mazes_are_rejected() {
        assert_eq!(load_maze("#S12#"), Err(MazeError::RowCount(1)));
        let short = OPEN_ROOM.replacen("#S.....1#", "#S....1#", 1);
        assert_eq!(load_maze(&short), Err(MazeError::RowLength { row: 1, len: 8 }));
        let dup = OPEN_ROOM.replacen("#.......#", "#..S....#", 1);
        assert_eq!(load_maze(&dup), Err(MazeError::DuplicateMarker('S')));
        let missing = OPEN_ROOM.replacen('2', ".", 1);
        assert_eq!(load_maze(&missing), Err(MazeError::MissingMarker('2')));
        let bad = OPEN_ROOM.replacen("#.......#", "#...x...#", 1);
        assert!(matches!(load_maze(&bad), Err(MazeError::BadChar { ch: 'x', .. })));
    }

    #[test]
    fn trailing_newline_is_optional() {
        assert_eq!(load_maze(OPEN_ROOM.trim_end()), load_maze(OPEN_ROOM));
    }

    #[test]
    fn default_maze_distances() {
        // Frozen from a BFS run over assets/default_maze.txt.
        let maze = MazeSpec::default_maze();
        assert_eq!(maze.start, Cell::new(7, 4));
        assert_eq!(maze.distance(maze.start, maze.g1), Some(9));
        assert_eq!(maze.distance(maze.start, maze.g2), Some(9));
        assert_eq!(maze.distance(maze.g1, maze.g2), Some(14));
        assert_eq!(maze.to_string(), DEFAULT_MAZE);
    }

    #[test]
    fn context_schedule() {
        assert_eq!(context_at(Condition::new(Order::AB, 25), 24), Context::A);
        assert_eq!(context_at(Condition::new(Order::AB, 25), 25), Context::B);
        assert_eq!(context_at(Condition::new(Order::BA, 30), 0), Context::B);
        assert_eq!(target_of(Context::A), Goal::G1);
        assert_eq!(target_of(Context::B), Goal::G2);
        assert_eq!(wrong_of(Context::A), Goal::G2);
    }

    #[test]
    fn condition_parsing() {
        assert_eq!("AB25".parse::<Condition>().unwrap(), Condition::AB25);
        assert_eq!("BA30".parse::<Condition>().unwrap(), Condition::BA30);
        assert!("CA3".parse::<Condition>().is_err());
        assert!(Condition::new(Order::AB, 80).validate(80).is_err());
        assert!(Condition::new(Order::AB, 0).validate(80).is_err());
    }

    #[test]
    fn reset_state() {
        let maze = MazeSpec::default_maze();
        let env = Env::new(maze.clone(), Condition::AB25, EnvConfig::default()).unwrap();
        let (s, obs) = env.reset();
        assert_eq!((s.pos, s.t, s.phase), (maze.start, 0, 0));
        assert!(!s.phase0_success && !s.phase1_success && !s.done);
        assert_eq!(obs.context, Context::A);
        assert_eq!(obs.patch[4], CellClass::SelfCenter);
        let env = Env::new(maze, Condition::BA30, EnvConfig::default()).unwrap();
        assert_eq!(env.reset().1.context, Context::B);
    }

    #[test]
    fn patch_marks_out_of_bounds_as_wall() {
        let maze = MazeSpec::default_maze();
        let patch = local_patch(&maze, Cell::new(0, 0));
        assert_eq!(patch[0], CellClass::WallOrOob);
        assert_eq!(patch[4], CellClass::SelfCenter);
        let patch = local_patch(&maze, Cell::new(2, 1));
        assert_eq!(patch[1], CellClass::G1);
    }

    #[test]
    fn phase0_target_pays_once() {
        let env = open_room_env(Condition::AB25);
        let (mut s, _) = env.reset();
        s.pos = Cell::new(1, 6);
        let tr = env.step(&s, Action::Right).unwrap();
        assert!(tr.events.reached_target && tr.state.phase0_success);
        assert!(tr.reward > 0.9);
        // leave and re-enter: no second payment
        let back = env.step(&tr.state, Action::Left).unwrap();
        let again = env.step(&back.state, Action::Right).unwrap();
        assert!(again.events.reached_target);
        assert!(again.reward < 0.5);
    }

    #[test]
    fn phase1_target_is_gated() {
        let env = open_room_env(Condition::AB25);
        let (mut s, _) = env.reset();
        s.pos = Cell::new(6, 7);
        s.t = 30;
        s.phase = 1;
        let tr = env.step(&s, Action::Down).unwrap();
        assert!(tr.events.reached_target);
        assert!(!tr.state.phase1_success && !tr.state.done);
        assert!(tr.reward < 0.5);

        s.phase0_success = true;
        let tr = env.step(&s, Action::Down).unwrap();
        assert!(tr.state.phase1_success && tr.state.done);
        assert!(tr.reward > 0.9);
    }

    #[test]
    fn blocked_move() {
        let env = open_room_env(Condition::AB25);
        let (s, _) = env.reset();
        let tr = env.step(&s, Action::Up).unwrap();
        assert!(tr.events.blocked);
        assert_eq!(tr.state.pos, s.pos);
        let cfg = EnvConfig::default();
        assert!((tr.reward - (cfg.step_cost + cfg.blocked_penalty)).abs() < 1e-12);
    }

    #[test]
    fn wrong_goal_penalised_once_per_phase_and_not_terminal() {
        let env = open_room_env(Condition::AB25);
        let (mut s, _) = env.reset();
        s.pos = Cell::new(6, 7);
        let first = env.step(&s, Action::Down).unwrap();
        assert!(first.events.reached_wrong && !first.state.done);
        let out = env.step(&first.state, Action::Up).unwrap();
        let second = env.step(&out.state, Action::Down).unwrap();
        assert!(second.events.reached_wrong);
        assert!(first.reward < second.reward);
    }

    #[test]
    fn stepping_finished_episode_errors() {
        let env = open_room_env(Condition::AB25);
        let (mut s, _) = env.reset();
        s.done = true;
        assert_eq!(env.step(&s, Action::Up), Err(EnvError::EpisodeFinished));
    }

    #[test]
    fn horizon_terminates() {
        let env = open_room_env(Condition::AB25);
        let (mut s, _) = env.reset();
        let mut n = 0;
        while !s.done {
            s = env.step(&s, Action::Up).unwrap().state;
            n += 1;
        }
        assert_eq!(n, 80);
        assert_eq!(s.t, 80);
    }

    #[test]
    fn classify_moves_next_to_g1() {
        let maze = load_maze(OPEN_ROOM).unwrap();
        let pos = Cell::new(1, 6);
        use MoveClass::*;
        assert_eq!(classify_moves(&maze, pos, Context::A), [Other, Other, Other, Target]);
        assert_eq!(classify_moves(&maze, pos, Context::B), [Other, Other, Other, Wrong]);
        let far = Cell::new(4, 3);
        for c in Context::ALL {
            assert_eq!(classify_moves(&maze, far, c), [Other; 4]);
        }
    }

    #[test]
    fn shaping_rewards_progress_toward_target() {
        let env = open_room_env(Condition::AB25);
        let (s, _) = env.reset();
        let tr = env.step(&s, Action::Right).unwrap();
        assert!((tr.shaping - 0.02).abs() < 1e-12);
        let tr = env.step(&s, Action::Down).unwrap();
        assert!((tr.shaping + 0.02).abs() < 1e-12);
    }

    #[test]
    fn shortest_path_reaches_goal() {
        let maze = MazeSpec::default_maze();
        let path = maze.shortest_path(maze.start, maze.g2).unwrap();
        assert_eq!(path.len(), 9);
    }
}
