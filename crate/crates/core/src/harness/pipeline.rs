//! In-memory building blocks shared by the subcommands and the examples.

use super::{AnyEnv, RunConfig, Result};
use crate::env::{generate_demonstrations, DemoDataset};
use crate::hrl::Trainer;
use crate::skillspace::{PretrainConfig, SkillModel};

/// Planner demonstrations for `cfg.seed`.
pub fn generate_dataset(cfg: &RunConfig) -> Result<DemoDataset> {
    let trajectories = generate_demonstrations(cfg.seed, cfg.demo_count, &cfg.planner)?;
    Ok(DemoDataset { planner: cfg.planner.clone(), trajectories })
}

/// Stage-1 settings with the state width taken from the demonstrations.
/// Planner actions are always planar.
pub fn pretrain_config(cfg: &RunConfig, data: &DemoDataset) -> PretrainConfig {
    let mut p = cfg.pretrain.clone();
    if let Some(s) = data.trajectories.first().and_then(|t| t.states.first()) {
        p.model.state_dim = s.len();
    }
    p.model.action_dim = 2;
    let sigma = p.model.log_sigma_a.first().copied().unwrap_or(-3.0);
    p.model.log_sigma_a = vec![sigma; p.model.action_dim];
    p
}

/// A fresh Stage-2 trainer on the configured environment. Hierarchical
/// modes need `model`; its dimensions are checked against the environment
/// before anything else happens.
pub fn make_trainer(cfg: &RunConfig, model: Option<SkillModel>) -> Result<Trainer<AnyEnv>> {
    let env = AnyEnv::new(cfg.env)?;
    Ok(Trainer::new(cfg.train.clone(), env, model, cfg.seed)?)
}
