//! Stage 2: high-level and low-level prior-regularized soft actor-critic,
//! with the baseline and ablation modes.
//!
//! The high level picks a skill `z` every `H` steps and is regularized
//! toward the learned skill prior; the low level picks primitive actions
//! given `(s, k, z)` and is regularized toward the decoder's action prior.
//! Low-level targets at the last step of a skill bootstrap from the
//! high-level critic.

mod agents;
mod buffer;
mod config;
mod nets;
mod rollout;
mod sac;
mod targets;
mod train;
mod update;

pub use agents::{HighAgent, LowAgent, LL_INIT_LOG_STD, LOG_ALPHA_RANGE};
pub use buffer::{HighTransition, LowTransition, Record, RecordDims, ReplayBuffer};
pub use config::{Flags, Mode, TrainConfig};
pub use nets::{CriticStats, GaussianPolicy, TwinCritic};
pub use rollout::{evaluate, rollout, Actor, EpisodeStats, Rollout, RolloutCursor};
pub use sac::{SacAgent, SacStats};
pub use targets::{alpha_update, bootstrap, log_alpha_update, combine_ll_target, hl_target, sac_target, tabular_ll_targets, LlBranch};
pub use train::{Agents, MetricsRow, Trainer, METRICS_HEADER};
pub use update::{hl_update, ll_target, ll_update, HlStats, LlStats, TargetTrace};

use crate::env::EnvError;
use crate::numgrad::NumError;
use crate::skillspace::SkillError;

#[derive(Debug, thiserror::Error)]
pub enum HrlError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("rollout at env step {step}: {source}")]
    Rollout { step: usize, source: EnvError },
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HrlError>;
