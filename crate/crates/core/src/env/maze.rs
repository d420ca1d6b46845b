use rand::Rng;

use super::{EnvError, Environment, Step};
use crate::rng::SimRng;

/// Clearance kept between the agent and a contacted wall face, as a fraction
/// of the cell size, so positions never land exactly on a wall boundary.
const FACE_MARGIN: f64 = 1e-9;

/// Observation scale in length units; positions in `[0, 12]` map to `[-1, 1]`.
pub const OBS_HALF_EXTENT: f64 = 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cell {
    Free,
    Wall,
}

/// Occupancy grid plus task constants. Cell `(row, col)` covers
/// `x ∈ [col·c, (col+1)·c)`, `y ∈ [row·c, (row+1)·c)` for cell size `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct MazeSpec {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Cell>,
    pub cell_size: f64,
    pub start: [f64; 2],
    pub goal: [f64; 2],
    pub goal_threshold: f64,
    pub max_velocity: f64,
    pub episode_length: usize,
}

impl MazeSpec {
    /// Parses `#` (wall), `.` (free), `S` (start) and `G` (goal) rows. Start
    /// and goal sit at their cell centers.
    pub fn from_ascii(
        id: &str,
        rows: &[&str],
        cell_size: f64,
        max_velocity: f64,
        goal_threshold: f64,
        episode_length: usize,
    ) -> Result<Self, EnvError> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut cells = Vec::with_capacity(n_rows * n_cols);
        let (mut start, mut goal) = (None, None);
        for (r, line) in rows.iter().enumerate() {
            if line.len() != n_cols {
                return Err(EnvError::InvalidMaze(format!("row {r} has ragged width")));
            }
            for (c, ch) in line.chars().enumerate() {
                let center = [(c as f64 + 0.5) * cell_size, (r as f64 + 0.5) * cell_size];
                cells.push(match ch {
                    '#' => Cell::Wall,
                    '.' => Cell::Free,
                    'S' => {
                        start = Some(center);
                        Cell::Free
                    }
                    'G' => {
                        goal = Some(center);
                        Cell::Free
                    }
                    other => return Err(EnvError::InvalidMaze(format!("unknown cell glyph {other:?}"))),
                });
            }
        }
        let spec = Self {
            id: id.to_string(),
            rows: n_rows,
            cols: n_cols,
            cells,
            cell_size,
            start: start.ok_or_else(|| EnvError::InvalidMaze("no start marker".into()))?,
            goal: goal.ok_or_else(|| EnvError::InvalidMaze("no goal marker".into()))?,
            goal_threshold,
            max_velocity,
            episode_length,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidMaze(m.to_string()));
        if self.rows < 3 || self.cols < 3 || self.cells.len() != self.rows * self.cols {
            return bad("grid must be at least 3x3 with rows*cols cells");
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                let edge = r == 0 || c == 0 || r + 1 == self.rows || c + 1 == self.cols;
                if edge && self.cell(r, c) != Cell::Wall {
                    return bad("grid boundary must be wall");
                }
            }
        }
        if !(self.cell_size > 0.0) || !(self.goal_threshold > 0.0) {
            return bad("cell size and goal threshold must be positive");
        }
        if !(self.max_velocity > 0.0 && self.max_velocity < self.cell_size) {
            return bad("max velocity must lie in (0, cell size)");
        }
        if self.episode_length == 0 {
            return bad("episode length must be positive");
        }
        if !self.is_free_point(self.goal) {
            return bad("goal must lie in a free cell");
        }
        if !self.is_free_point(self.start) {
            return bad("start must lie in a free cell");
        }
        Ok(())
    }

    pub fn cell(&self, row: usize, col: usize) -> Cell {
        self.cells[row * self.cols + col]
    }

    pub fn is_free(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols && self.cell(row, col) == Cell::Free
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let (cx, cy) = ((p[0] / self.cell_size).floor(), (p[1] / self.cell_size).floor());
        if cx < 0.0 || cy < 0.0 || !cx.is_finite() || !cy.is_finite() {
            return None;
        }
        let (r, c) = (cy as usize, cx as usize);
        (r < self.rows && c < self.cols).then_some((r, c))
    }

    pub fn is_free_point(&self, p: [f64; 2]) -> bool {
        self.cell_of(p).is_some_and(|(r, c)| self.cell(r, c) == Cell::Free)
    }

    pub fn cell_center(&self, row: usize, col: usize) -> [f64; 2] {
        [(col as f64 + 0.5) * self.cell_size, (row as f64 + 0.5) * self.cell_size]
    }

    pub fn extent(&self) -> [f64; 2] {
        [self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size]
    }

    /// Position and previous position as `p / OBS_HALF_EXTENT − 1`. The
    /// scale is shared by every maze so that training layouts and
    /// downstream mazes describe positions and velocities in the same units.
    pub fn observe(&self, s: &EnvState) -> Vec<f64> {
        let f = |x: f64| x / OBS_HALF_EXTENT - 1.0;
        vec![f(s.pos[0]), f(s.pos[1]), f(s.prev[0]), f(s.prev[1])]
    }

    /// Inverse of [`MazeSpec::observe`], up to rounding.
    pub fn unobserve(&self, obs: &[f64]) -> EnvState {
        let f = |o: f64| (o + 1.0) * OBS_HALF_EXTENT;
        EnvState { pos: [f(obs[0]), f(obs[1])], prev: [f(obs[2]), f(obs[3])], t: 0 }
    }

    pub fn goal_distance(&self, p: [f64; 2]) -> f64 {
        (p[0] - self.goal[0]).hypot(p[1] - self.goal[1])
    }

    pub fn initial_state(&self, pos: [f64; 2]) -> EnvState {
        EnvState { pos, prev: pos, t: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub pos: [f64; 2],
    pub prev: [f64; 2],
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub state: EnvState,
    pub reward: f64,
    pub done: bool,
    pub wall_contact: bool,
    /// The action had a component outside `[-1, 1]` and was clamped.
    pub action_clamped: bool,
}

/// Kinematic point-mass step with axiswise (x, then y) wall resolution.
pub fn maze_step(spec: &MazeSpec, state: &EnvState, action: [f64; 2]) -> Result<StepResult, EnvError> {
    if !spec.is_free_point(state.pos) {
        return Err(EnvError::InvalidState(state.pos));
    }
    if !action.iter().all(|a| a.is_finite()) {
        return Err(EnvError::NonFiniteAction);
    }
    let clamped = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
    let action_clamped = clamped != action;
    let mut pos = state.pos;
    let mut wall_contact = false;
    for axis in 0..2 {
        let v = clamped[axis] * spec.max_velocity;
        if v == 0.0 {
            continue;
        }
        let mut next = pos;
        next[axis] += v;
        if spec.is_free_point(next) {
            pos = next;
        } else {
            wall_contact = true;
            let c = spec.cell_size;
            let wall_index = (next[axis] / c).floor();
            let margin = FACE_MARGIN * c;
            pos[axis] = if v > 0.0 {
                (wall_index * c - margin).max(pos[axis])
            } else {
                ((wall_index + 1.0) * c + margin).min(pos[axis])
            };
        }
    }
    let reward = if spec.goal_distance(pos) < spec.goal_threshold { 1.0 } else { 0.0 };
    let t = state.t + 1;
    Ok(StepResult {
        state: EnvState { pos, prev: state.pos, t },
        reward,
        done: t >= spec.episode_length,
        wall_contact,
        action_clamped,
    })
}

/// Stateful maze wrapper implementing [`Environment`]. Training resets jitter
/// the start uniformly within `start_jitter` cells per axis.
#[derive(Clone, Debug)]
pub struct MazeEnv {
    pub spec: MazeSpec,
    pub start_jitter: f64,
    state: EnvState,
}

impl MazeEnv {
    pub fn new(spec: MazeSpec) -> Self {
        let state = spec.initial_state(spec.start);
        Self { spec, start_jitter: 0.25, state }
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    fn jittered_start(&self, u: [f64; 2]) -> [f64; 2] {
        let j = self.start_jitter * self.spec.cell_size;
        let p = [self.spec.start[0] + j * u[0], self.spec.start[1] + j * u[1]];
        if self.spec.is_free_point(p) {
            p
        } else {
            self.spec.start
        }
    }
}

impl Environment for MazeEnv {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> usize {
        self.spec.episode_length
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let u = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        self.state = self.spec.initial_state(self.jittered_start(u));
        self.spec.observe(&self.state)
    }

    fn reset_eval(&mut self, index: usize) -> Vec<f64> {
        // A fixed low-discrepancy pattern of starts inside the jitter box.
        let phi = 0.618_033_988_749_895;
        let u = if index == 0 {
            [0.0, 0.0]
        } else {
            let a = (index as f64 * phi).fract();
            let b = (index as f64 * phi * phi).fract();
            [2.0 * a - 1.0, 2.0 * b - 1.0]
        };
        self.state = self.spec.initial_state(self.jittered_start(u));
        self.spec.observe(&self.state)
    }

    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError> {
        if action.len() != 2 {
            return Err(EnvError::ActionDim { expected: 2, got: action.len() });
        }
        let res = maze_step(&self.spec, &self.state, [action[0], action[1]])?;
        self.state = res.state;
        Ok(Step {
            observation: self.spec.observe(&self.state),
            reward: res.reward,
            timeout: res.done,
            wall_contact: res.wall_contact,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn room() -> MazeSpec {
        MazeSpec::from_ascii("room", &["#####", "#S..#", "#...#", "#..G#", "#####"], 1.0, 0.3, 0.5, 50).unwrap()
    }

    #[test]
    fn zero_action_keeps_position() {
        let m = room();
        let s = m.initial_state(m.start);
        let r = maze_step(&m, &s, [0.0, 0.0]).unwrap();
        assert_eq!(r.state.pos, s.pos);
        assert_eq!(r.reward, 0.0);
        assert!(!r.wall_contact);
    }

    #[test]
    fn pushing_into_wall_clamps_perpendicular_and_keeps_parallel() {
        let m = room();
        // Near the left wall of cell (1,1); push left and down.
        let s = m.initial_state([1.1, 1.5]);
        let r = maze_step(&m, &s, [-1.0, 1.0]).unwrap();
        assert!(r.wall_contact);
        assert!(r.state.pos[0] >= 1.0 && r.state.pos[0] < 1.0 + 1e-6);
        assert!((r.state.pos[1] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn reward_inside_goal_region() {
        let m = room();
        let s = m.initial_state([3.4, 3.5]);
        let r = maze_step(&m, &s, [0.1, 0.0]).unwrap();
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn done_at_episode_length_and_clamp_flag() {
        let m = room();
        let mut s = m.initial_state(m.start);
        s.t = 49;
        let r = maze_step(&m, &s, [2.0, 0.0]).unwrap();
        assert!(r.done);
        assert!(r.action_clamped);
        assert!((r.state.pos[0] - 1.8).abs() < 1e-12);
    }

    #[test]
    fn invalid_state_and_nan_action_error() {
        let m = room();
        assert!(maze_step(&m, &m.initial_state([0.5, 0.5]), [0.0, 0.0]).is_err());
        assert!(maze_step(&m, &m.initial_state(m.start), [f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn corner_contact_zeroes_both_components() {
        let m = room();
        let s = m.initial_state([1.05, 1.05]);
        let r = maze_step(&m, &s, [-1.0, -1.0]).unwrap();
        assert!(r.state.pos[0] < 1.05 && r.state.pos[0] >= 1.0);
        assert!(r.state.pos[1] < 1.05 && r.state.pos[1] >= 1.0);
    }

    #[test]
    fn observe_round_trips() {
        let m = room();
        let s = EnvState { pos: [1.3, 2.7], prev: [1.2, 2.5], t: 0 };
        let back = m.unobserve(&m.observe(&s));
        assert!((back.pos[0] - 1.3).abs() < 1e-12 && (back.prev[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_open_boundary_and_wall_goal() {
        assert!(MazeSpec::from_ascii("x", &["#S.", "#.G", "###"], 1.0, 0.3, 0.5, 5).is_err());
        let mut m = room();
        m.goal = [0.5, 0.5];
        assert!(m.validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn never_inside_wall_and_deterministic(actions in prop::collection::vec((-1.5f64..1.5, -1.5f64..1.5), 1..400)) {
            let m = room();
            let mut s = m.initial_state(m.start);
            for (ax, ay) in actions {
                let r = maze_step(&m, &s, [ax, ay]).unwrap();
                let again = maze_step(&m, &s, [ax, ay]).unwrap();
                prop_assert_eq!(r, again);
                prop_assert!(m.is_free_point(r.state.pos));
                let expect = if m.goal_distance(r.state.pos) < m.goal_threshold { 1.0 } else { 0.0 };
                prop_assert_eq!(r.reward, expect);
                s = r.state;
                s.t = 0;
            }
        }
    }
}
