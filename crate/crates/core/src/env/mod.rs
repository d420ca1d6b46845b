//! Continuous point-maze simulator, the right-angle demonstration planner,
//! a dense reaching task and a discrete chain used by the tabular oracle.

mod chain;
mod dataset;
mod downstream;
mod maze;
mod planner;
mod reach;

pub use chain::{chain_env, ChainTables};
pub use dataset::{load_dataset, save_dataset, validate_replay, DemoDataset, DATASET_VERSION};
pub use downstream::{make_downstream_maze, MazeKind};
pub use maze::{maze_step, Cell, EnvState, MazeEnv, MazeSpec, StepResult, OBS_HALF_EXTENT};
pub use planner::{
    bfs_path, emit_actions, generate_demonstrations, generate_layout, replay_trajectory, PlannerConfig,
    Trajectory,
};
pub use reach::ReachEnv;

use crate::rng::SimRng;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid maze: {0}")]
    InvalidMaze(String),
    #[error("state position {0:?} is not in free space")]
    InvalidState([f64; 2]),
    #[error("action contains a non-finite component")]
    NonFiniteAction,
    #[error("action has {got} components, expected {expected}")]
    ActionDim { expected: usize, got: usize },
    #[error("unknown maze kind {0:?}")]
    UnknownKind(String),
    #[error("no solvable layout after {0} attempts")]
    LayoutRetries(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("replay of trajectory {index} diverged: {reason}")]
    ReplayMismatch { index: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One environment transition as seen by a learner.
#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Episode ended by the time limit. Never a true terminal state.
    pub timeout: bool,
    pub wall_contact: bool,
}

/// Episodic continuous-control task used by the Stage-2 learners.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn episode_length(&self) -> usize;
    /// Training reset (may randomize the start).
    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64>;
    /// Evaluation reset; `index` selects one of a reproducible set of starts.
    fn reset_eval(&mut self, index: usize) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError>;
}
