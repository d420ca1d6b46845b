//! Random small layouts and the right-angle demonstration planner:
//! breadth-first search on the cell graph followed by a constant-speed,
//! one-axis-at-a-time action emitter.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};

use super::maze::{maze_step, Cell, MazeSpec};
use super::EnvError;
use crate::rng::SimRng;

#[derive(Clone, Debug, PartialEq)]
pub struct PlannerConfig {
    /// Full grid size including the boundary wall.
    pub rows: usize,
    pub cols: usize,
    pub wall_prob: f64,
    pub cell_size: f64,
    pub max_velocity: f64,
    pub goal_threshold: f64,
    /// Emitted action magnitude along the active axis.
    pub speed: f64,
    /// Minimum number of actions per trajectory (at least the skill horizon).
    pub min_steps: usize,
    pub max_retries: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            rows: 7,
            cols: 7,
            wall_prob: 0.25,
            cell_size: 1.0,
            max_velocity: 0.2,
            goal_threshold: 1.0,
            speed: 0.6,
            min_steps: 10,
            max_retries: 200,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidArgument(m.to_string()));
        if self.rows < 4 || self.cols < 4 {
            return bad("planner layouts need at least 4x4 cells");
        }
        if !(0.0..0.9).contains(&self.wall_prob) {
            return bad("wall probability must be in [0, 0.9)");
        }
        if !(self.speed > 0.0 && self.speed <= 1.0) {
            return bad("planner speed must be in (0, 1]");
        }
        if self.max_retries == 0 {
            return bad("max_retries must be positive");
        }
        Ok(())
    }
}

/// Demonstration: `states.len() == actions.len() + 1`; `states` are
/// observations as produced by [`MazeSpec::observe`].
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<[f64; 2]>,
    pub layout_id: u64,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Shortest 4-connected cell path, inclusive of both ends.
pub fn bfs_path(spec: &MazeSpec, from: (usize, usize), to: (usize, usize)) -> Option<Vec<(usize, usize)>> {
    if !spec.is_free(from.0, from.1) || !spec.is_free(to.0, to.1) {
        return None;
    }
    let idx = |(r, c): (usize, usize)| r * spec.cols + c;
    let mut parent = vec![usize::MAX; spec.rows * spec.cols];
    parent[idx(from)] = idx(from);
    let mut queue = VecDeque::from([from]);
    while let Some((r, c)) = queue.pop_front() {
        if (r, c) == to {
            let mut path = vec![to];
            let mut cur = idx(to);
            while cur != idx(from) {
                cur = parent[cur];
                path.push((cur / spec.cols, cur % spec.cols));
            }
            path.reverse();
            return Some(path);
        }
        let neighbors = [(r.wrapping_sub(1), c), (r + 1, c), (r, c.wrapping_sub(1)), (r, c + 1)];
        for n in neighbors {
            if spec.is_free(n.0, n.1) && parent[idx(n)] == usize::MAX {
                parent[idx(n)] = idx((r, c));
                queue.push_back(n);
            }
        }
    }
    None
}

/// Draws a layout from `layout_seed`: random interior walls, random start and
/// goal cells joined by a path of at least three cells. Retries are bounded.
pub fn generate_layout(layout_seed: u64, cfg: &PlannerConfig) -> Result<MazeSpec, EnvError> {
    cfg.validate()?;
    let mut rng = SimRng::seed_from_u64(layout_seed);
    for _ in 0..cfg.max_retries {
        let mut cells = vec![Cell::Wall; cfg.rows * cfg.cols];
        let mut free = Vec::new();
        for r in 1..cfg.rows - 1 {
            for c in 1..cfg.cols - 1 {
                if !rng.gen_bool(cfg.wall_prob) {
                    cells[r * cfg.cols + c] = Cell::Free;
                    free.push((r, c));
                }
            }
        }
        if free.len() < 2 {
            continue;
        }
        let s = free[rng.gen_range(0..free.len())];
        let g = free[rng.gen_range(0..free.len())];
        let center = |(r, c): (usize, usize)| [(c as f64 + 0.5) * cfg.cell_size, (r as f64 + 0.5) * cfg.cell_size];
        let spec = MazeSpec {
            id: format!("layout-{layout_seed:016x}"),
            rows: cfg.rows,
            cols: cfg.cols,
            cells,
            cell_size: cfg.cell_size,
            start: center(s),
            goal: center(g),
            goal_threshold: cfg.goal_threshold,
            max_velocity: cfg.max_velocity,
            episode_length: 10_000,
        };
        if bfs_path(&spec, s, g).is_some_and(|p| p.len() >= 3) {
            spec.validate()?;
            return Ok(spec);
        }
    }
    Err(EnvError::LayoutRetries(cfg.max_retries))
}

/// Converts a cell path into axis-aligned actions of magnitude `speed`, with
/// a shorter final action on each straight segment so that every corner is
/// hit exactly. Every action has exactly one nonzero component.
pub fn emit_actions(spec: &MazeSpec, path: &[(usize, usize)], speed: f64) -> Result<Vec<[f64; 2]>, EnvError> {
    let Some(&first) = path.first() else {
        return Ok(Vec::new());
    };
    let mut waypoints = Vec::new();
    for w in path.windows(3) {
        let d0 = (w[1].0 as i64 - w[0].0 as i64, w[1].1 as i64 - w[0].1 as i64);
        let d1 = (w[2].0 as i64 - w[1].0 as i64, w[2].1 as i64 - w[1].1 as i64);
        if d0 != d1 {
            waypoints.push(spec.cell_center(w[1].0, w[1].1));
        }
    }
    let last = path[path.len() - 1];
    waypoints.push(spec.cell_center(last.0, last.1));

    let mut state = spec.initial_state(spec.cell_center(first.0, first.1));
    let mut actions = Vec::new();
    let tol = 1e-9 * spec.cell_size;
    for wp in waypoints {
        for axis in 0..2 {
            loop {
                let remaining = wp[axis] - state.pos[axis];
                if remaining.abs() <= tol {
                    break;
                }
                let mag = speed.min(remaining.abs() / spec.max_velocity);
                let mut a = [0.0; 2];
                a[axis] = mag.copysign(remaining);
                let res = maze_step(spec, &state, a)?;
                if res.wall_contact {
                    return Err(EnvError::InvalidArgument("planner path touched a wall".into()));
                }
                state = res.state;
                actions.push(a);
            }
        }
    }
    Ok(actions)
}

/// Replays `traj` through [`maze_step`]; every recorded state must match to
/// `1e-9` and the final state must be inside the goal region.
pub fn replay_trajectory(spec: &MazeSpec, traj: &Trajectory, index: usize) -> Result<(), EnvError> {
    let fail = |reason: String| EnvError::ReplayMismatch { index, reason };
    if traj.states.len() != traj.actions.len() + 1 {
        return Err(fail("state count must exceed action count by one".into()));
    }
    let mut state = spec.unobserve(&traj.states[0]);
    for (t, a) in traj.actions.iter().enumerate() {
        state = maze_step(spec, &state, *a)?.state;
        let obs = spec.observe(&state);
        if obs.iter().zip(&traj.states[t + 1]).any(|(x, y)| (x - y).abs() > 1e-9) {
            return Err(fail(format!("state {} differs from recorded", t + 1)));
        }
    }
    if spec.goal_distance(state.pos) >= spec.goal_threshold {
        return Err(fail("final state outside goal region".into()));
    }
    Ok(())
}

fn plan_one(layout_id: u64, seed: u64, cfg: &PlannerConfig) -> Result<Trajectory, EnvError> {
    let spec = generate_layout(layout_id, cfg)?;
    let s = spec.cell_of(spec.start).expect("validated start");
    let g = spec.cell_of(spec.goal).expect("validated goal");
    let path = bfs_path(&spec, s, g).ok_or(EnvError::LayoutRetries(cfg.max_retries))?;
    let actions = emit_actions(&spec, &path, cfg.speed)?;
    let mut state = spec.initial_state(spec.start);
    let mut states = vec![spec.observe(&state)];
    for a in &actions {
        state = maze_step(&spec, &state, *a)?.state;
        states.push(spec.observe(&state));
    }
    Ok(Trajectory { states, actions, layout_id, seed })
}

/// Generates `count` demonstrations, one per freshly drawn layout. Layouts
/// whose plan is shorter than `cfg.min_steps` are redrawn (bounded).
pub fn generate_demonstrations(seed: u64, count: usize, cfg: &PlannerConfig) -> Result<Vec<Trajectory>, EnvError> {
    if count == 0 {
        return Err(EnvError::InvalidArgument("demonstration count must be at least 1".into()));
    }
    cfg.validate()?;
    let mut rng = crate::rng::stream(seed, crate::rng::Stream::Layout);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut done = false;
        for _ in 0..cfg.max_retries {
            let layout_id = rng.next_u64();
            let traj = plan_one(layout_id, seed, cfg)?;
            if traj.len() >= cfg.min_steps {
                out.push(traj);
                done = true;
                break;
            }
        }
        if !done {
            return Err(EnvError::LayoutRetries(cfg.max_retries));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corridor(rows: &[&str]) -> MazeSpec {
        MazeSpec::from_ascii("t", rows, 1.0, 0.15, 0.5, 1000).unwrap()
    }

    fn nonzero_axes(a: &[f64; 2]) -> usize {
        a.iter().filter(|x| **x != 0.0).count()
    }

    #[test]
    fn straight_corridor_is_monotone_single_axis() {
        let m = corridor(&["#######", "#S...G#", "#######"]);
        let path = bfs_path(&m, (1, 1), (1, 5)).unwrap();
        let acts = emit_actions(&m, &path, 0.6).unwrap();
        assert!(acts.iter().all(|a| a[0] > 0.0 && a[1] == 0.0));
    }

    #[test]
    fn l_corridor_changes_axis_once() {
        let m = corridor(&["#####", "#S..#", "###.#", "###G#", "#####"]);
        let path = bfs_path(&m, (1, 1), (3, 3)).unwrap();
        assert_eq!(path.len(), 5);
        let acts = emit_actions(&m, &path, 0.6).unwrap();
        let axis: Vec<usize> = acts.iter().map(|a| if a[0] != 0.0 { 0 } else { 1 }).collect();
        let switches = axis.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(switches, 1);
        assert!(acts.iter().all(|a| nonzero_axes(a) == 1));
    }

    #[test]
    fn bfs_finds_no_path_through_walls() {
        let m = corridor(&["#####", "#S#G#", "#####"]);
        assert!(bfs_path(&m, (1, 1), (1, 3)).is_none());
    }

    #[test]
    fn demonstrations_replay_and_are_axis_aligned() {
        let cfg = PlannerConfig::default();
        let demos = generate_demonstrations(11, 20, &cfg).unwrap();
        let mut layouts = std::collections::HashSet::new();
        for (i, d) in demos.iter().enumerate() {
            let spec = generate_layout(d.layout_id, &cfg).unwrap();
            replay_trajectory(&spec, d, i).unwrap();
            assert!(d.actions.iter().all(|a| nonzero_axes(a) == 1));
            assert!(d.len() >= cfg.min_steps);
            layouts.insert(d.layout_id);
        }
        assert!(layouts.len() >= 2);
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = PlannerConfig::default();
        assert_eq!(generate_demonstrations(5, 3, &cfg).unwrap(), generate_demonstrations(5, 3, &cfg).unwrap());
    }

    #[test]
    fn impossible_layouts_error_after_bound() {
        let cfg = PlannerConfig { wall_prob: 0.89, rows: 4, cols: 4, max_retries: 3, ..Default::default() };
        assert!(matches!(generate_layout(1, &cfg), Err(EnvError::LayoutRetries(3))));
        assert!(generate_demonstrations(1, 0, &PlannerConfig::default()).is_err());
    }
}
