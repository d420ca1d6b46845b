//! Hand-authored downstream mazes.

use std::str::FromStr;

use super::maze::MazeSpec;
use super::EnvError;

pub const DOWNSTREAM_EPISODE_LENGTH: usize = 300;
pub const DOWNSTREAM_MAX_VELOCITY: f64 = 0.2;
pub const DOWNSTREAM_GOAL_THRESHOLD: f64 = 1.0;

/// Staircase band down to the right, then a corridor back left to the goal.
/// Each band row holds two free cells shifted one column per row, so the
/// line `x = y + 0.5` (cell units) stays in free space; riding it needs both
/// axes every step, while a right-angle path zigzags. The reversal at the
/// bottom means no constant push, diagonal or not, reaches the goal.
const DIAGONAL: &[&str] = &[
    "############",
    "#S.#########",
    "##..########",
    "###..#######",
    "####..######",
    "#G....######",
    "############",
    "############",
    "############",
    "############",
    "############",
    "############",
];

/// A serpentine tunnel two cells wide.
const CURVY_TUNNEL: &[&str] = &[
    "############",
    "#S.....#####",
    "#......#####",
    "#####..#####",
    "#####..#####",
    "#......#####",
    "#..G...#####",
    "############",
    "############",
    "############",
    "############",
    "############",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MazeKind {
    Diagonal,
    CurvyTunnel,
}

impl MazeKind {
    pub fn name(self) -> &'static str {
        match self {
            MazeKind::Diagonal => "diagonal",
            MazeKind::CurvyTunnel => "curvy_tunnel",
        }
    }

    pub fn layout(self) -> &'static [&'static str] {
        match self {
            MazeKind::Diagonal => DIAGONAL,
            MazeKind::CurvyTunnel => CURVY_TUNNEL,
        }
    }
}

impl FromStr for MazeKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "diagonal" => Ok(MazeKind::Diagonal),
            "curvy_tunnel" | "curvy-tunnel" => Ok(MazeKind::CurvyTunnel),
            other => Err(EnvError::UnknownKind(other.to_string())),
        }
    }
}

pub fn make_downstream_maze(kind: &str) -> Result<MazeSpec, EnvError> {
    let kind: MazeKind = kind.parse()?;
    MazeSpec::from_ascii(
        kind.name(),
        kind.layout(),
        1.0,
        DOWNSTREAM_MAX_VELOCITY,
        DOWNSTREAM_GOAL_THRESHOLD,
        DOWNSTREAM_EPISODE_LENGTH,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{bfs_path, maze_step};

    #[test]
    fn unknown_kind_errors() {
        assert!(matches!(make_downstream_maze("spiral"), Err(EnvError::UnknownKind(_))));
    }

    #[test]
    fn start_and_goal_connected() {
        for kind in ["diagonal", "curvy_tunnel"] {
            let m = make_downstream_maze(kind).unwrap();
            let s = m.cell_of(m.start).unwrap();
            let g = m.cell_of(m.goal).unwrap();
            assert!(bfs_path(&m, s, g).is_some(), "{kind}");
        }
    }

    #[test]
    fn diagonal_line_is_free_and_faster_than_right_angles() {
        let m = make_downstream_maze("diagonal").unwrap();
        // Every point of x = y + 0.5 along the band is free.
        for i in 0..=500 {
            let y = 1.5 + 3.0 * i as f64 / 500.0;
            assert!(m.is_free_point([y + 0.5, y]), "{y}");
        }
        // Diagonal steps ride the line without wall contact.
        let mut s = m.initial_state([2.0, 1.5]);
        let mut contacts = 0;
        for _ in 0..14 {
            let r = maze_step(&m, &s, [1.0, 1.0]).unwrap();
            contacts += r.wall_contact as usize;
            s = r.state;
        }
        assert_eq!(contacts, 0);
        assert!(s.pos[1] > 4.0);
        // A single-axis action cannot make progress for long: the band forces turns.
        let mut s = m.initial_state(m.start);
        for _ in 0..20 {
            s = maze_step(&m, &s, [1.0, 0.0]).unwrap().state;
        }
        assert!(s.pos[0] < 3.0);
    }

    #[test]
    fn no_constant_action_reaches_the_diagonal_goal() {
        let m = make_downstream_maze("diagonal").unwrap();
        for k in 0..16 {
            let th = std::f64::consts::TAU * k as f64 / 16.0;
            let mut s = m.initial_state(m.start);
            for _ in 0..m.episode_length {
                s = maze_step(&m, &s, [th.cos(), th.sin()]).unwrap().state;
                let d = (s.pos[0] - m.goal[0]).hypot(s.pos[1] - m.goal[1]);
                assert!(d > m.goal_threshold, "direction {k} reaches the goal");
            }
        }
    }

    #[test]
    fn curvy_tunnel_is_at_least_two_wide() {
        let m = make_downstream_maze("curvy_tunnel").unwrap();
        let s = m.cell_of(m.start).unwrap();
        let g = m.cell_of(m.goal).unwrap();
        let path = bfs_path(&m, s, g).unwrap();
        // Each path cell belongs to some free 2x2 block.
        for (r, c) in path {
            let blocks = [(r - 1, c - 1), (r - 1, c), (r, c - 1), (r, c)];
            let ok = blocks.iter().any(|&(br, bc)| {
                m.is_free(br, bc) && m.is_free(br + 1, bc) && m.is_free(br, bc + 1) && m.is_free(br + 1, bc + 1)
            });
            assert!(ok, "cell ({r},{c}) is in a one-wide section");
        }
    }
}
