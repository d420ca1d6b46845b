//! Environment interaction for both the two-level agent and flat SAC.

use rand::Rng;

use super::agents::{HighAgent, LowAgent};
use super::buffer::{HighTransition, LowTransition};
use super::sac::SacAgent;
use super::update::sample;
use super::{HrlError, Result};
use crate::env::Environment;
use crate::numgrad::squash;
use crate::rng::SimRng;
use crate::skillspace::decoder_input;

/// The policy being executed.
#[derive(Clone, Copy, Debug)]
pub enum Actor<'a> {
    Hierarchical { high: &'a HighAgent, low: &'a LowAgent },
    Flat(&'a SacAgent),
}

impl Actor<'_> {
    fn horizon(&self) -> usize {
        match self {
            Actor::Hierarchical { low, .. } => low.horizon,
            Actor::Flat(_) => 1,
        }
    }

    fn choose_skill<R: Rng + ?Sized>(&self, s: &[f64], deterministic: bool, rng: &mut R) -> Result<Vec<f64>> {
        match self {
            Actor::Hierarchical { high, .. } => {
                let d = high.policy.dist(s)?;
                Ok(if deterministic { d.mean } else { sample(&d, rng) })
            }
            Actor::Flat(_) => Ok(Vec::new()),
        }
    }

    /// `(pre-squash, squashed)` action.
    fn act<R: Rng + ?Sized>(&self, s: &[f64], k: usize, z: &[f64], deterministic: bool, rng: &mut R) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = match self {
            Actor::Hierarchical { low, .. } => low.policy.dist(&decoder_input(s, k, z, low.horizon)?)?,
            Actor::Flat(sac) => sac.policy.dist(s)?,
        };
        let pre = if deterministic { d.mean } else { sample(&d, rng) };
        let a = squash(&pre);
        Ok((pre, a))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpisodeStats {
    pub reward: f64,
    pub length: usize,
    pub wall_contact_steps: usize,
}

/// Transitions and finished episodes from one call to [`RolloutCursor::collect`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rollout {
    pub low: Vec<LowTransition>,
    pub high: Vec<HighTransition>,
    pub episodes: Vec<EpisodeStats>,
    pub wall_contact_steps: usize,
}

/// Position inside the current episode, carried across collection calls.
/// A segment cut short by the time limit is dropped rather than stored as
/// a shorter skill.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutCursor {
    obs: Option<Vec<f64>>,
    t: usize,
    z: Vec<f64>,
    seg_start: Vec<f64>,
    seg_reward: f64,
    episode: EpisodeStats,
}

impl RolloutCursor {
    pub fn new() -> Self {
        Self::default()
    }

    /// True between episodes; the next step resets the environment.
    pub fn at_episode_boundary(&self) -> bool {
        self.obs.is_none()
    }

    pub fn collect<E: Environment>(&mut self, env: &mut E, actor: Actor<'_>, steps: usize, rng: &mut SimRng) -> Result<Rollout> {
        let h = actor.horizon();
        let mut out = Rollout::default();
        for _ in 0..steps {
            let s = match self.obs.take() {
                Some(o) => o,
                None => {
                    self.t = 0;
                    self.episode = EpisodeStats::default();
                    env.reset(rng)
                }
            };
            let k = self.t % h;
            if k == 0 {
                self.z = actor.choose_skill(&s, false, rng)?;
                self.seg_start = s.clone();
                self.seg_reward = 0.0;
            }
            let (a_pre, a) = actor.act(&s, k, &self.z, false, rng)?;
            let step = env.step(&a).map_err(|source| HrlError::Rollout { step: self.t, source })?;
            self.t += 1;
            self.seg_reward += step.reward;
            self.episode.reward += step.reward;
            self.episode.length += 1;
            if step.wall_contact {
                self.episode.wall_contact_steps += 1;
                out.wall_contact_steps += 1;
            }
            if k + 1 == h && matches!(actor, Actor::Hierarchical { .. }) {
                out.high.push(HighTransition {
                    s: std::mem::take(&mut self.seg_start),
                    z: self.z.clone(),
                    reward: self.seg_reward,
                    s_next: step.observation.clone(),
                    done: false,
                });
            }
            out.low.push(LowTransition { s, k, z: self.z.clone(), a_pre, a, r: step.reward, s_next: step.observation.clone(), done: false });
            if step.timeout {
                out.episodes.push(self.episode);
            } else {
                self.obs = Some(step.observation);
            }
        }
        Ok(out)
    }
}

/// Fresh-episode collection of `steps` environment steps.
pub fn rollout<E: Environment>(env: &mut E, high: &HighAgent, low: &LowAgent, steps: usize, rng: &mut SimRng) -> Result<Rollout> {
    RolloutCursor::new().collect(env, Actor::Hierarchical { high, low }, steps, rng)
}

/// Mean return of deterministic (policy-mean) episodes from the
/// environment's evaluation starts `0..episodes`, on a copy of `env`.
pub fn evaluate<E: Environment + Clone>(env: &E, actor: Actor<'_>, episodes: usize) -> Result<f64> {
    let mut env = env.clone();
    let h = actor.horizon();
    // Deterministic actions never draw from this generator.
    let mut unused = crate::rng::stream(0, crate::rng::Stream::Eval);
    let mut total = 0.0;
    for i in 0..episodes {
        let mut s = env.reset_eval(i);
        let mut z = Vec::new();
        for t in 0..env.episode_length() {
            if t % h == 0 {
                z = actor.choose_skill(&s, true, &mut unused)?;
            }
            let (_, a) = actor.act(&s, t % h, &z, true, &mut unused)?;
            let step = env.step(&a).map_err(|source| HrlError::Rollout { step: t, source })?;
            total += step.reward;
            if step.timeout {
                break;
            }
            s = step.observation;
        }
    }
    Ok(total / episodes.max(1) as f64)
}
