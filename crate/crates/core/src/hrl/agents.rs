use rand::Rng;

use super::nets::{GaussianPolicy, TwinCritic};
use super::{HrlError, TrainConfig};
use crate::numgrad::{Mlp, MlpSpec, Tensor, LOG_STD_MIN};
use crate::skillspace::SkillModel;

/// Upper and lower bounds on `log α`; keeps temperatures finite and positive.
pub const LOG_ALPHA_RANGE: (f64, f64) = (-30.0, 10.0);

/// High level: skill policy initialized from the skill prior, twin skill
/// critics, temperature.
#[derive(Clone, Debug)]
pub struct HighAgent {
    pub policy: GaussianPolicy,
    pub critic: TwinCritic,
    pub log_alpha: f64,
    pub delta: f64,
    pub gamma_z: f64,
}

impl HighAgent {
    pub fn from_skill_model<R: Rng + ?Sized>(model: &SkillModel, cfg: &TrainConfig, rng: &mut R) -> Result<Self, HrlError> {
        let mut net = model.prior.clone();
        net.params.reset_optimizer();
        let c = &model.config;
        Ok(Self {
            policy: GaussianPolicy { net, dim: c.latent_dim, std_floor: None },
            critic: TwinCritic::new(c.state_dim + c.latent_dim, &cfg.critic_hidden, rng)?,
            log_alpha: cfg.alpha_z_init.ln(),
            delta: cfg.delta_z,
            gamma_z: cfg.gamma_z,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn latent_dim(&self) -> usize {
        self.policy.dim
    }
}

/// Low level: action policy initialized from the decoder, twin action
/// critics over `(s, k, z, a)`, temperature.
#[derive(Clone, Debug)]
pub struct LowAgent {
    pub policy: GaussianPolicy,
    pub critic: TwinCritic,
    pub log_alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    pub horizon: usize,
    pub latent_dim: usize,
    /// Fixed action-prior standard deviation `σ_â`.
    pub sigma_a: Vec<f64>,
}

/// Initial log-std bias of the low-level policy head. At the clamp floor the
/// learned standard deviation is negligible next to `σ_â`.
pub const LL_INIT_LOG_STD: f64 = LOG_STD_MIN;

impl LowAgent {
    pub fn from_skill_model<R: Rng + ?Sized>(model: &SkillModel, cfg: &TrainConfig, rng: &mut R) -> Result<Self, HrlError> {
        let c = &model.config;
        let ad = c.action_dim;
        let dec = c.decoder_spec();
        let spec = MlpSpec { output: 2 * ad, ..dec.clone() };
        let mut net = Mlp::new(spec, rng)?;
        let (ow, ob) = net.output_layer();
        let (dw, db) = model.decoder.output_layer();
        let names: Vec<String> = net.params.iter().map(|p| p.name.clone()).collect();
        for (i, name) in names.iter().enumerate() {
            if i == ow || i == ob {
                continue;
            }
            let src = model.decoder.params.get(name).ok_or_else(|| HrlError::Config(format!("decoder lacks {name}")))?;
            *net.params.value_mut(i) = src.value.clone();
        }
        let (hid, _) = model.decoder.params.value(dw).dims2();
        let w_dec = model.decoder.params.value(dw);
        let mut w = vec![0.0; hid * 2 * ad];
        for r in 0..hid {
            w[r * 2 * ad..r * 2 * ad + ad].copy_from_slice(w_dec.row_slice(r));
        }
        *net.params.value_mut(ow) = Tensor::from_raw(hid, 2 * ad, w);
        let mut b = model.decoder.params.value(db).data().to_vec();
        b.extend(std::iter::repeat_n(LL_INIT_LOG_STD, ad));
        *net.params.value_mut(ob) = Tensor::from_raw(1, 2 * ad, b);
        net.params.reset_optimizer();

        let sigma_a: Vec<f64> = c.log_sigma_a.iter().map(|l| l.exp()).collect();
        // The entropy ablation measures `E[log π]`, so its target is the
        // negated target entropy.
        let delta = if cfg.flags.uniform_ll_prior { -cfg.target_entropy_per_dim * ad as f64 } else { cfg.delta_a };
        Ok(Self {
            policy: GaussianPolicy { net, dim: ad, std_floor: Some(sigma_a.clone()) },
            critic: TwinCritic::new(c.decoder_input_dim() + ad, &cfg.critic_hidden, rng)?,
            log_alpha: cfg.alpha_a_init.ln(),
            delta,
            gamma: cfg.gamma,
            horizon: c.horizon,
            latent_dim: c.latent_dim,
            sigma_a,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn action_dim(&self) -> usize {
        self.policy.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrl::Mode;
    use crate::numgrad::gaussian_kl;
    use crate::skillspace::{decoder_input, SkillModelConfig};
    use rand::SeedableRng;

    fn model() -> SkillModel {
        let mut c = SkillModelConfig::new(4, 2);
        c.hidden = vec![16, 16];
        SkillModel::new(c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(2)).unwrap()
    }

    #[test]
    fn low_policy_starts_at_decoder_and_prior() {
        let m = model();
        let cfg = TrainConfig::new(Mode::SkillCritic);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let low = LowAgent::from_skill_model(&m, &cfg, &mut rng).unwrap();
        for _ in 0..100 {
            let s: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let z: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let k = rng.gen_range(0..10);
            let x = decoder_input(&s, k, &z, 10).unwrap();
            let pi = low.policy.dist(&x).unwrap();
            let mu = m.decode(&s, k, &z).unwrap();
            for (a, b) in pi.mean.iter().zip(&mu) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
            // Only the clamped learned std separates the policy from the prior.
            let kl = gaussian_kl(&pi, &m.action_prior(&s, k, &z).unwrap()).unwrap();
            assert!(kl < 1e-5, "{kl}");
        }
    }

    #[test]
    fn high_policy_starts_at_skill_prior() {
        let m = model();
        let cfg = TrainConfig::new(Mode::SkillCritic);
        let high = HighAgent::from_skill_model(&m, &cfg, &mut rand_chacha::ChaCha8Rng::seed_from_u64(4)).unwrap();
        let s = [0.2, -0.3, 0.2, -0.25];
        let p = m.skill_prior(&s).unwrap();
        assert_eq!(high.policy.dist(&s).unwrap().mean, p.mean);
        assert!((high.alpha() - cfg.alpha_z_init).abs() < 1e-15);
    }
}
