//! Dense-reward point-mass reaching in the open square `[-1, 1]²`, used to
//! sanity-check the flat SAC learner against an analytic optimum.

use rand::{Rng, SeedableRng};

use super::{EnvError, Environment, Step};
use crate::rng::SimRng;

const D_MAX: f64 = 2.0 * std::f64::consts::SQRT_2;

#[derive(Clone, Debug)]
pub struct ReachEnv {
    pub max_velocity: f64,
    pub episode_length: usize,
    pos: [f64; 2],
    goal: [f64; 2],
    t: usize,
}

impl Default for ReachEnv {
    fn default() -> Self {
        Self::new(0.1, 50)
    }
}

impl ReachEnv {
    pub fn new(max_velocity: f64, episode_length: usize) -> Self {
        Self { max_velocity, episode_length, pos: [0.0; 2], goal: [0.0; 2], t: 0 }
    }

    fn observe(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.goal[0] - self.pos[0], self.goal[1] - self.pos[1]]
    }

    fn reward_at(&self, p: [f64; 2]) -> f64 {
        1.0 - (p[0] - self.goal[0]).hypot(p[1] - self.goal[1]) / D_MAX
    }

    pub fn eval_start(index: usize) -> ([f64; 2], [f64; 2]) {
        let mut rng = SimRng::seed_from_u64(0x5eed_0000 + index as u64);
        let mut draw = || [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        (draw(), draw())
    }

    pub fn set(&mut self, pos: [f64; 2], goal: [f64; 2]) {
        self.pos = pos;
        self.goal = goal;
        self.t = 0;
    }

    /// Return of the greedy per-axis clamp policy, which moves to the
    /// projection of the goal onto the reachable box every step and is
    /// therefore optimal for a distance-decreasing reward.
    pub fn optimal_return(&self, pos: [f64; 2], goal: [f64; 2]) -> f64 {
        let mut p = pos;
        let mut total = 0.0;
        for _ in 0..self.episode_length {
            for i in 0..2 {
                p[i] += (goal[i] - p[i]).clamp(-self.max_velocity, self.max_velocity);
            }
            total += 1.0 - (p[0] - goal[0]).hypot(p[1] - goal[1]) / D_MAX;
        }
        total
    }
}

impl Environment for ReachEnv {
    fn observation_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn episode_length(&self) -> usize {
        self.episode_length
    }

    fn reset(&mut self, rng: &mut SimRng) -> Vec<f64> {
        let pos = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let goal = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        self.set(pos, goal);
        self.observe()
    }

    fn reset_eval(&mut self, index: usize) -> Vec<f64> {
        let (pos, goal) = Self::eval_start(index);
        self.set(pos, goal);
        self.observe()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError> {
        if action.len() != 2 {
            return Err(EnvError::ActionDim { expected: 2, got: action.len() });
        }
        if !action.iter().all(|a| a.is_finite()) {
            return Err(EnvError::NonFiniteAction);
        }
        let mut contact = false;
        for i in 0..2 {
            let next = self.pos[i] + action[i].clamp(-1.0, 1.0) * self.max_velocity;
            contact |= !(-1.0..=1.0).contains(&next);
            self.pos[i] = next.clamp(-1.0, 1.0);
        }
        self.t += 1;
        Ok(Step {
            reward: self.reward_at(self.pos),
            observation: self.observe(),
            timeout: self.t >= self.episode_length,
            wall_contact: contact,
        })
    }
}
