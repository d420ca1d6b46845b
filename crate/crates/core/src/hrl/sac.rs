//! Single-level soft actor-critic on primitive actions, the flat baseline.

use rand::Rng;

use super::buffer::LowTransition;
use super::nets::{adam, join_rows, squashed_log_prob, stack, CriticStats, GaussianPolicy, TwinCritic};
use super::targets::{log_alpha_update, sac_target};
use super::update::sample;
use super::{HrlError, Result, TrainConfig};
use crate::numgrad::{adam_step, squash, Activation, Graph, Mlp, MlpSpec, Tensor};
use crate::rng::normal_vec;

#[derive(Clone, Debug)]
pub struct SacAgent {
    pub policy: GaussianPolicy,
    pub critic: TwinCritic,
    pub log_alpha: f64,
    /// Target for `E[log π]`, i.e. the negated target entropy.
    pub delta: f64,
    pub gamma: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SacStats {
    pub critic: CriticStats,
    pub policy_loss: f64,
    /// Batch mean of `log π(ã|s)`.
    pub log_prob: f64,
    pub alpha: f64,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, cfg: &TrainConfig, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(state_dim, &cfg.critic_hidden, 2 * action_dim, Activation::LeakyRelu);
        Ok(Self {
            policy: GaussianPolicy { net: Mlp::new(spec, rng)?, dim: action_dim, std_floor: None },
            critic: TwinCritic::new(state_dim + action_dim, &cfg.critic_hidden, rng)?,
            log_alpha: cfg.alpha_a_init.ln(),
            delta: -cfg.target_entropy_per_dim * action_dim as f64,
            gamma: cfg.gamma,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.dim
    }

    /// Targets `r + γ(1−done)[min Q̄(s′, a′) − α log π(a′|s′)]`.
    pub fn targets<R: Rng + ?Sized>(&self, batch: &[LowTransition], rng: &mut R) -> Result<Vec<f64>> {
        let next: Vec<Vec<f64>> = batch.iter().map(|t| t.s_next.clone()).collect();
        let pi = self.policy.dists(&stack(&next))?;
        let pre: Vec<Vec<f64>> = pi.iter().map(|d| sample(d, rng)).collect();
        let act: Vec<Vec<f64>> = pre.iter().map(|p| squash(p)).collect();
        let q = self.critic.target_min(&stack(&join_rows(&next, &act)))?;
        let alpha = self.alpha();
        let y: Vec<f64> = batch
            .iter()
            .zip(pi.iter().zip(&pre))
            .zip(q)
            .map(|((t, (d, p)), q)| sac_target(t.r, self.gamma, t.done, q, alpha, squashed_log_prob(d, p)))
            .collect();
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(HrlError::NonFinite(format!("flat target at batch row {i}")));
        }
        Ok(y)
    }

    pub fn update<R: Rng + ?Sized>(&mut self, batch: &[LowTransition], cfg: &TrainConfig, rng: &mut R) -> Result<SacStats> {
        if batch.is_empty() {
            return Err(HrlError::Config("empty batch".into()));
        }
        let n = batch.len();
        let y = self.targets(batch, rng)?;
        let states: Vec<Vec<f64>> = batch.iter().map(|t| t.s.clone()).collect();
        let acts: Vec<Vec<f64>> = batch.iter().map(|t| t.a.clone()).collect();
        let critic = self.critic.regress(&stack(&join_rows(&states, &acts)), &y, &adam(cfg.critic_lr, cfg.adam_beta2))?;

        let ad = self.action_dim();
        let alpha = self.alpha();
        let mut g = Graph::new();
        let sv = g.constant(stack(&states));
        let bound = self.policy.net.bind(&mut g);
        let pi = self.policy.dist_on(&mut g, &bound, sv)?;
        let noise = g.constant(Tensor::from_raw(n, ad, normal_vec(rng, n * ad)));
        let pre = pi.rsample(&mut g, noise);
        let act = g.tanh(pre);
        let input = g.concat_cols(&[sv, act]);
        let q = self.critic.min_q_on(&mut g, input)?;
        let lp = pi.squashed_log_prob(&mut g, pre, act);
        let log_prob = g.value(lp).sum() / n as f64;
        let weighted = g.scale(lp, alpha);
        let obj = g.sub(weighted, q);
        let loss = g.mean(obj);
        let policy_loss = g.value(loss).item();
        if !policy_loss.is_finite() {
            return Err(HrlError::NonFinite(format!("flat policy loss {policy_loss}")));
        }
        let grads = g.backward(loss)?;
        let p = &mut self.policy.net.params;
        p.zero_grad();
        p.accumulate(&grads, &bound);
        adam_step(p, &adam(cfg.policy_lr, cfg.adam_beta2))?;

        self.log_alpha = log_alpha_update(self.log_alpha, log_prob, self.delta, cfg.alpha_lr_a);
        self.critic.soft_update(cfg.tau);
        Ok(SacStats { critic, policy_loss, log_prob, alpha: self.alpha() })
    }
}
