//! Runtime choice among the Stage-2 environments.

use super::config::EnvKind;
use super::Result;
use crate::env::{make_downstream_maze, EnvError, Environment, MazeEnv, ReachEnv, Step};
use crate::rng::SimRng;

#[derive(Clone, Debug)]
pub enum AnyEnv {
    Maze(MazeEnv),
    Reach(ReachEnv),
}

impl AnyEnv {
    pub fn new(kind: EnvKind) -> Result<Self> {
        Ok(match kind {
            EnvKind::Diagonal | EnvKind::CurvyTunnel => AnyEnv::Maze(MazeEnv::new(make_downstream_maze(kind.name())?)),
            EnvKind::Reach => AnyEnv::Reach(ReachEnv::default()),
        })
    }

    fn inner(&self) -> &dyn Environment {
        match self {
            AnyEnv::Maze(e) => e,
            AnyEnv::Reach(e) => e,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Environment {
        match self {
            AnyEnv::Maze(e) => e,
            AnyEnv::Reach(e) => e,
        }
    }
}

impl Environment for AnyEnv {
    fn observation_dim(&self) -> usize {
        self.inner().observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner().action_dim()
    }

    fn episode_length(&self) -> usize {
        self.inner().episode_length()
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        self.inner_mut().reset(rng)
    }

    fn reset_eval(&mut self, index: usize) -> Vec<f64> {
        self.inner_mut().reset_eval(index)
    }

    fn step(&mut self, action: &[f64]) -> std::result::Result<Step, EnvError> {
        self.inner_mut().step(action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn wrapper_forwards_to_the_selected_environment() {
        for kind in [EnvKind::Diagonal, EnvKind::CurvyTunnel, EnvKind::Reach] {
            let mut env = AnyEnv::new(kind).unwrap();
            assert_eq!((env.observation_dim(), env.action_dim()), (4, 2));
            let mut rng = stream(0, Stream::Rollout);
            let s = env.reset(&mut rng);
            assert_eq!(s.len(), 4);
            let step = env.step(&[0.5, 0.5]).unwrap();
            assert_eq!(step.observation.len(), 4);
            assert!(env.step(&[0.0]).is_err());
        }
    }
}
