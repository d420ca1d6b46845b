//! One gradient step of each level: critics, then policy, then temperature,
//! then target networks.

use rand::Rng;

use super::agents::{HighAgent, LowAgent};
use super::buffer::{HighTransition, LowTransition};
use super::nets::{adam, join_rows, squashed_log_prob, stack, CriticStats};
use super::targets::{combine_ll_target, hl_target, log_alpha_update, LlBranch};
use super::{Flags, HrlError, Result, TrainConfig};
use crate::numgrad::{gaussian_kl, squash, DiagGaussian, GaussianVar, Graph, Tensor};
use crate::rng::normal_vec;
use crate::skillspace::{decoder_input, SkillModel};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct HlStats {
    pub critic: CriticStats,
    pub policy_loss: f64,
    /// Batch mean of `KL(π_z ‖ p(z|s))` before the step.
    pub kl: f64,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LlStats {
    pub critic: CriticStats,
    pub policy_loss: f64,
    /// Batch mean of the low-level regularizer: `KL(π_a ‖ action prior)`,
    /// or `log π_a` in the uniform-prior ablation.
    pub divergence: f64,
    pub alpha: f64,
    pub boundary_fraction: f64,
}

/// Low-level targets together with the branch each one used.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTrace {
    pub targets: Vec<f64>,
    pub branches: Vec<LlBranch>,
}

/// Skill prior for a batch of states.
pub(crate) fn skill_priors(model: &SkillModel, states: &Tensor) -> Result<Vec<DiagGaussian>> {
    let head = model.prior.infer(states)?;
    let d = model.latent_dim();
    Ok((0..head.rows()).map(|i| crate::skillspace::head_to_gaussian(head.row_slice(i), d)).collect())
}

/// Action prior for a batch of decoder inputs.
pub(crate) fn action_priors(model: &SkillModel, inputs: &Tensor) -> Result<Vec<DiagGaussian>> {
    let mean = model.decoder.infer(inputs)?;
    let ls = &model.config.log_sigma_a;
    Ok((0..mean.rows()).map(|i| DiagGaussian { mean: mean.row_slice(i).to_vec(), log_std: ls.clone() }).collect())
}

pub(crate) fn sample<R: Rng + ?Sized>(d: &DiagGaussian, rng: &mut R) -> Vec<f64> {
    let eps = normal_vec(rng, d.dim());
    d.mean.iter().zip(&d.log_std).zip(eps).map(|((m, l), e)| m + l.exp() * e).collect()
}

fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    match xs.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(HrlError::NonFinite(format!("{what} at batch row {i}: {}", xs[i]))),
        None => Ok(()),
    }
}

/// `(min Q̄_z(s′, z′), KL(π_z(·|s′) ‖ p(·|s′)))` with `z′ ∼ π_z(·|s′)`.
fn high_successor<R: Rng + ?Sized>(high: &HighAgent, model: &SkillModel, states: &[Vec<f64>], rng: &mut R) -> Result<Vec<(f64, f64)>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    let s = stack(states);
    let pi = high.policy.dists(&s)?;
    let prior = skill_priors(model, &s)?;
    let z: Vec<Vec<f64>> = pi.iter().map(|d| sample(d, rng)).collect();
    let q = high.critic.target_min(&stack(&join_rows(states, &z)))?;
    pi.iter()
        .zip(&prior)
        .zip(q)
        .map(|((p, pr), q)| Ok((q, gaussian_kl(p, pr)?)))
        .collect()
}

pub fn hl_update<R: Rng + ?Sized>(high: &mut HighAgent, batch: &[HighTransition], model: &SkillModel, cfg: &TrainConfig, rng: &mut R) -> Result<HlStats> {
    if batch.is_empty() {
        return Err(HrlError::Config("empty high-level batch".into()));
    }
    let n = batch.len();
    let alpha = high.alpha();
    let next: Vec<Vec<f64>> = batch.iter().map(|t| t.s_next.clone()).collect();
    let succ = high_successor(high, model, &next, rng)?;
    let y: Vec<f64> = batch
        .iter()
        .zip(&succ)
        .map(|(t, (q, kl))| hl_target(t.reward, high.gamma_z, t.done, *q, alpha, *kl))
        .collect();
    check_finite("high-level target", &y)?;
    let states: Vec<Vec<f64>> = batch.iter().map(|t| t.s.clone()).collect();
    let zs: Vec<Vec<f64>> = batch.iter().map(|t| t.z.clone()).collect();
    let critic = high.critic.regress(&stack(&join_rows(&states, &zs)), &y, &adam(cfg.critic_lr, cfg.adam_beta2))?;

    // Policy: minimize E[α·KL − min Q(s, z̃)], z̃ reparameterized.
    let s = stack(&states);
    let prior = skill_priors(model, &s)?;
    let d = high.latent_dim();
    let mut g = Graph::new();
    let sv = g.constant(s);
    let bound = high.policy.net.bind(&mut g);
    let pi = high.policy.dist_on(&mut g, &bound, sv)?;
    let noise = g.constant(Tensor::from_raw(n, d, normal_vec(rng, n * d)));
    let z = pi.rsample(&mut g, noise);
    let input = g.concat_cols(&[sv, z]);
    let q = high.critic.min_q_on(&mut g, input)?;
    let pr = prior_var(&mut g, &prior);
    let kl = pi.kl(&mut g, &pr);
    let kl_mean = g.value(kl).sum() / n as f64;
    let weighted = g.scale(kl, alpha);
    let obj = g.sub(weighted, q);
    let loss = g.mean(obj);
    let policy_loss = g.value(loss).item();
    if !policy_loss.is_finite() {
        return Err(HrlError::NonFinite(format!("high-level policy loss {policy_loss}")));
    }
    let grads = g.backward(loss)?;
    let p = &mut high.policy.net.params;
    p.zero_grad();
    p.accumulate(&grads, &bound);
    crate::numgrad::adam_step(p, &adam(cfg.policy_lr, cfg.adam_beta2))?;

    high.log_alpha = log_alpha_update(high.log_alpha, kl_mean, high.delta, cfg.alpha_lr_z);
    high.critic.soft_update(cfg.tau);
    Ok(HlStats { critic, policy_loss, kl: kl_mean, alpha: high.alpha() })
}

fn prior_var(g: &mut Graph, prior: &[DiagGaussian]) -> GaussianVar {
    let means: Vec<Vec<f64>> = prior.iter().map(|p| p.mean.clone()).collect();
    let stds: Vec<Vec<f64>> = prior.iter().map(|p| p.std()).collect();
    GaussianVar { mean: g.constant(stack(&means)), std: g.constant(stack(&stds)) }
}

/// Low-level critic targets. Rows at the last phase of a skill bootstrap
/// from the high level unless `flags.independent_q`; all others from the
/// low level with the skill held fixed.
pub fn ll_target<R: Rng + ?Sized>(
    low: &LowAgent,
    high: &HighAgent,
    batch: &[LowTransition],
    model: &SkillModel,
    flags: &Flags,
    rng: &mut R,
) -> Result<TargetTrace> {
    let h = low.horizon;
    let boundary: Vec<bool> = batch.iter().map(|t| !flags.independent_q && t.k + 1 == h).collect();

    let b_states: Vec<Vec<f64>> = batch.iter().zip(&boundary).filter(|(_, b)| **b).map(|(t, _)| t.s_next.clone()).collect();
    let mut b_succ = high_successor(high, model, &b_states, rng)?.into_iter();

    let w_inputs: Vec<Vec<f64>> = batch
        .iter()
        .zip(&boundary)
        .filter(|(_, b)| !**b)
        .map(|(t, _)| decoder_input(&t.s_next, (t.k + 1) % h, &t.z, h))
        .collect::<std::result::Result<_, _>>()?;
    let mut w_succ = if w_inputs.is_empty() {
        Vec::new().into_iter()
    } else {
        let x = stack(&w_inputs);
        let pi = low.policy.dists(&x)?;
        let pre: Vec<Vec<f64>> = pi.iter().map(|d| sample(d, rng)).collect();
        let act: Vec<Vec<f64>> = pre.iter().map(|p| squash(p)).collect();
        let q = low.critic.target_min(&stack(&join_rows(&w_inputs, &act)))?;
        let reg: Vec<f64> = if flags.uniform_ll_prior {
            pi.iter().zip(&pre).map(|(d, p)| squashed_log_prob(d, p)).collect()
        } else {
            let prior = action_priors(model, &x)?;
            pi.iter().zip(&prior).map(|(d, p)| gaussian_kl(d, p)).collect::<std::result::Result<_, _>>()?
        };
        q.into_iter().zip(reg).collect::<Vec<_>>().into_iter()
    };

    let (alpha_z, alpha_a) = (high.alpha(), low.alpha());
    let mut targets = Vec::with_capacity(batch.len());
    let mut branches = Vec::with_capacity(batch.len());
    for (t, b) in batch.iter().zip(&boundary) {
        let branch = if *b {
            let (q_z, kl_z) = b_succ.next().expect("one successor per boundary row");
            LlBranch::Boundary { q_z, alpha_z, kl_z }
        } else {
            let (q_a, reg) = w_succ.next().expect("one successor per within-skill row");
            LlBranch::Within { q_a, alpha_a, reg }
        };
        targets.push(combine_ll_target(t.r, low.gamma, t.done, branch));
        branches.push(branch);
    }
    check_finite("low-level target", &targets)?;
    Ok(TargetTrace { targets, branches })
}

pub fn ll_update<R: Rng + ?Sized>(
    low: &mut LowAgent,
    high: &HighAgent,
    batch: &[LowTransition],
    model: &SkillModel,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LlStats> {
    if batch.is_empty() {
        return Err(HrlError::Config("empty low-level batch".into()));
    }
    let n = batch.len();
    let h = low.horizon;
    let trace = ll_target(low, high, batch, model, &cfg.flags, rng)?;
    let inputs: Vec<Vec<f64>> = batch
        .iter()
        .map(|t| decoder_input(&t.s, t.k, &t.z, h))
        .collect::<std::result::Result<_, _>>()?;
    let acts: Vec<Vec<f64>> = batch.iter().map(|t| t.a.clone()).collect();
    let critic = low.critic.regress(&stack(&join_rows(&inputs, &acts)), &trace.targets, &adam(cfg.critic_lr, cfg.adam_beta2))?;

    let x = stack(&inputs);
    let ad = low.action_dim();
    let alpha = low.alpha();
    let mut g = Graph::new();
    let prior = if cfg.flags.uniform_ll_prior { None } else { Some(action_priors(model, &x)?) };
    let xv = g.constant(x);
    let bound = low.policy.net.bind(&mut g);
    let pi = low.policy.dist_on(&mut g, &bound, xv)?;
    let noise = g.constant(Tensor::from_raw(n, ad, normal_vec(rng, n * ad)));
    let pre = pi.rsample(&mut g, noise);
    let act = g.tanh(pre);
    let input = g.concat_cols(&[xv, act]);
    let q = low.critic.min_q_on(&mut g, input)?;
    let reg = match &prior {
        Some(p) => {
            let pv = prior_var(&mut g, p);
            pi.kl(&mut g, &pv)
        }
        None => pi.squashed_log_prob(&mut g, pre, act),
    };
    let divergence = g.value(reg).sum() / n as f64;
    let weighted = g.scale(reg, alpha);
    let obj = g.sub(weighted, q);
    let loss = g.mean(obj);
    let policy_loss = g.value(loss).item();
    if !policy_loss.is_finite() {
        return Err(HrlError::NonFinite(format!("low-level policy loss {policy_loss}")));
    }
    let grads = g.backward(loss)?;
    let p = &mut low.policy.net.params;
    p.zero_grad();
    p.accumulate(&grads, &bound);
    crate::numgrad::adam_step(p, &adam(cfg.policy_lr, cfg.adam_beta2))?;

    low.log_alpha = log_alpha_update(low.log_alpha, divergence, low.delta, cfg.alpha_lr_a);
    low.critic.soft_update(cfg.tau);
    let boundary_fraction = trace.branches.iter().filter(|b| b.is_boundary()).count() as f64 / n as f64;
    Ok(LlStats { critic, policy_loss, divergence, alpha: low.alpha(), boundary_fraction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrl::Mode;
    use crate::skillspace::SkillModelConfig;
    use rand::SeedableRng;

    fn setup(mode: Mode) -> (SkillModel, HighAgent, LowAgent, TrainConfig) {
        let mut c = SkillModelConfig::new(3, 2);
        c.hidden = vec![16, 16];
        c.horizon = 3;
        c.latent_dim = 2;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let m = SkillModel::new(c, &mut rng).unwrap();
        let mut cfg = TrainConfig::new(mode);
        cfg.critic_hidden = vec![16];
        let high = HighAgent::from_skill_model(&m, &cfg, &mut rng).unwrap();
        let low = LowAgent::from_skill_model(&m, &cfg, &mut rng).unwrap();
        (m, high, low, cfg)
    }

    fn low_batch(n: usize, h: usize, done: bool) -> Vec<LowTransition> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        (0..n)
            .map(|i| {
                let pre: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                LowTransition {
                    s: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    k: i % h,
                    z: (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    a: squash(&pre),
                    a_pre: pre,
                    r: rng.gen_range(0.0..1.0),
                    s_next: (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    done,
                }
            })
            .collect()
    }

    #[test]
    fn only_last_phase_rows_reference_high_level() {
        for mode in [Mode::SkillCritic, Mode::IndependentQ] {
            let (m, high, low, cfg) = setup(mode);
            let batch = low_batch(30, 3, false);
            let trace = ll_target(&low, &high, &batch, &m, &cfg.flags, &mut rand_chacha::ChaCha8Rng::seed_from_u64(2)).unwrap();
            for (t, b) in batch.iter().zip(&trace.branches) {
                let expect = mode == Mode::SkillCritic && t.k == 2;
                assert_eq!(b.is_boundary(), expect, "k = {}", t.k);
            }
        }
    }

    #[test]
    fn terminal_rows_target_reward() {
        let (m, high, low, cfg) = setup(Mode::SkillCritic);
        let batch = low_batch(12, 3, true);
        let trace = ll_target(&low, &high, &batch, &m, &cfg.flags, &mut rand_chacha::ChaCha8Rng::seed_from_u64(2)).unwrap();
        for (t, y) in batch.iter().zip(&trace.targets) {
            assert_eq!(*y, t.r);
        }
    }

    #[test]
    fn boundary_target_without_temperature_is_reward_plus_discounted_q() {
        let (m, mut high, low, cfg) = setup(Mode::SkillCritic);
        high.log_alpha = f64::NEG_INFINITY;
        assert_eq!(high.alpha(), 0.0);
        let mut batch = low_batch(3, 3, false);
        batch.retain(|t| t.k == 2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let trace = ll_target(&low, &high, &batch, &m, &cfg.flags, &mut rng.clone()).unwrap();
        // Replay the same successor draw by hand.
        let t = &batch[0];
        let pi = high.policy.dist(&t.s_next).unwrap();
        let z = sample(&pi, &mut rng);
        let x: Vec<f64> = t.s_next.iter().chain(&z).copied().collect();
        let q = high.critic.target_min(&Tensor::row(&x)).unwrap()[0];
        assert_eq!(trace.targets[0], t.r + low.gamma * q);
    }

    #[test]
    fn large_temperature_pulls_policy_mean_toward_prior() {
        let (m, high, mut low, mut cfg) = setup(Mode::SkillCritic);
        // Move the policy mean off the prior, then let the KL term dominate.
        let (_, ob) = low.policy.net.output_layer();
        for v in low.policy.net.params.value_mut(ob).data_mut()[..2].iter_mut() {
            *v += 0.5;
        }
        low.log_alpha = 1e4f64.ln();
        cfg.alpha_lr_a = 0.0;
        let batch = vec![low_batch(2, 3, false)[1].clone(); 8];
        let t = &batch[0];
        let x = decoder_input(&t.s, t.k, &t.z, 3).unwrap();
        let prior_mean = m.decode(&t.s, t.k, &t.z).unwrap();
        let gap = |low: &LowAgent| {
            let d = low.policy.dist(&x).unwrap();
            d.mean.iter().zip(&prior_mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
        };
        let before = gap(&low);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            ll_update(&mut low, &high, &batch, &m, &cfg, &mut rng).unwrap();
        }
        assert!(gap(&low) < before, "{} !< {before}", gap(&low));
    }

    #[test]
    fn updates_change_only_their_own_level() {
        let (m, mut high, mut low, cfg) = setup(Mode::SkillCritic);
        let hb: Vec<HighTransition> = (0..8)
            .map(|i| HighTransition { s: vec![0.1 * i as f64, 0.2, -0.3], z: vec![0.5, -0.5], reward: 1.0, s_next: vec![0.0, 0.1, 0.2], done: false })
            .collect();
        let low_before = low.policy.net.params.checksum();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = hl_update(&mut high, &hb, &m, &cfg, &mut rng).unwrap();
        assert!(s.kl >= 0.0 && s.alpha > 0.0);
        assert_eq!(low.policy.net.params.checksum(), low_before);
        let high_before = high.policy.net.params.checksum();
        let l = ll_update(&mut low, &high, &low_batch(9, 3, false), &m, &cfg, &mut rng).unwrap();
        assert!((l.boundary_fraction - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(high.policy.net.params.checksum(), high_before);
        assert_ne!(low.policy.net.params.checksum(), low_before);
    }
}
