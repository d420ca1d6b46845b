use std::path::Path;

use rand::Rng;

use super::{Result, SkillError, SkillWindow};
use crate::numgrad::{Activation, DiagGaussian, Mlp, MlpSpec, Tensor, TensorArchive, LOG_STD_MAX, LOG_STD_MIN};

pub const SKILL_MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SkillModelConfig {
    pub state_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub batch_norm: bool,
    /// Fixed log standard deviation of the action prior, per action dimension.
    pub log_sigma_a: Vec<f64>,
}

impl SkillModelConfig {
    pub fn new(state_dim: usize, action_dim: usize) -> Self {
        Self {
            state_dim,
            action_dim,
            horizon: 10,
            latent_dim: 10,
            hidden: vec![64, 64],
            batch_norm: true,
            log_sigma_a: vec![-3.0; action_dim],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 || self.horizon == 0 || self.latent_dim == 0 {
            return Err(SkillError::Config("dimensions and horizon must be positive".into()));
        }
        if self.log_sigma_a.len() != self.action_dim {
            return Err(SkillError::Shape { what: "log_sigma_a", expected: self.action_dim, got: self.log_sigma_a.len() });
        }
        if !self.log_sigma_a.iter().all(|v| v.is_finite()) {
            return Err(SkillError::Config("log_sigma_a must be finite".into()));
        }
        Ok(())
    }

    pub fn encoder_input_dim(&self) -> usize {
        self.horizon * (self.state_dim + self.action_dim)
    }

    pub fn decoder_input_dim(&self) -> usize {
        self.state_dim + self.horizon + self.latent_dim
    }

    pub fn encoder_spec(&self) -> MlpSpec {
        MlpSpec::new(self.encoder_input_dim(), &self.hidden, 2 * self.latent_dim, Activation::LeakyRelu).with_batch_norm(self.batch_norm)
    }

    pub fn decoder_spec(&self) -> MlpSpec {
        MlpSpec::new(self.decoder_input_dim(), &self.hidden, self.action_dim, Activation::LeakyRelu).with_batch_norm(self.batch_norm)
    }

    pub fn prior_spec(&self) -> MlpSpec {
        MlpSpec::new(self.state_dim, &self.hidden, 2 * self.latent_dim, Activation::LeakyRelu).with_batch_norm(self.batch_norm)
    }
}

pub fn phase_one_hot(k: usize, horizon: usize) -> Result<Vec<f64>> {
    if k >= horizon {
        return Err(SkillError::PhaseOutOfRange { k, horizon });
    }
    let mut v = vec![0.0; horizon];
    v[k] = 1.0;
    Ok(v)
}

/// `state ⊕ one-hot(k) ⊕ z`, the input layout shared by the decoder and the
/// low-level policy.
pub fn decoder_input(state: &[f64], k: usize, z: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(state.len() + horizon + z.len());
    v.extend_from_slice(state);
    v.extend(phase_one_hot(k, horizon)?);
    v.extend_from_slice(z);
    Ok(v)
}

/// Splits a `[1, 2d]` head into a Gaussian with clamped log-std.
pub(crate) fn head_to_gaussian(head: &[f64], d: usize) -> DiagGaussian {
    DiagGaussian {
        mean: head[..d].to_vec(),
        log_std: head[d..2 * d].iter().map(|l| l.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
    }
}

#[derive(Clone, Debug)]
pub struct SkillModel {
    pub config: SkillModelConfig,
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub prior: Mlp,
}

impl SkillModel {
    pub fn new<R: Rng + ?Sized>(config: SkillModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            encoder: Mlp::new(config.encoder_spec(), rng)?,
            decoder: Mlp::new(config.decoder_spec(), rng)?,
            prior: Mlp::new(config.prior_spec(), rng)?,
            config,
        })
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.config.state_dim {
            return Err(SkillError::Shape { what: "state", expected: self.config.state_dim, got: state.len() });
        }
        Ok(())
    }

    /// Flattened `s_0 a_0 s_1 a_1 …` encoder input.
    pub fn encoder_input(&self, w: &SkillWindow) -> Result<Vec<f64>> {
        let c = &self.config;
        if w.states.len() != c.horizon || w.actions.len() != c.horizon {
            return Err(SkillError::Shape { what: "window length", expected: c.horizon, got: w.actions.len().min(w.states.len()) });
        }
        let mut v = Vec::with_capacity(c.encoder_input_dim());
        for (s, a) in w.states.iter().zip(&w.actions) {
            self.check_state(s)?;
            if a.len() != c.action_dim {
                return Err(SkillError::Shape { what: "action", expected: c.action_dim, got: a.len() });
            }
            v.extend_from_slice(s);
            v.extend_from_slice(a);
        }
        Ok(v)
    }

    /// Posterior over `z` for one window, with batch norm in inference mode.
    pub fn encode(&self, w: &SkillWindow) -> Result<DiagGaussian> {
        let x = self.encoder_input(w)?;
        let head = self.encoder.infer(&Tensor::row(&x))?;
        Ok(head_to_gaussian(head.data(), self.config.latent_dim))
    }

    /// Pre-squash action mean for phase `k` of skill `z`.
    pub fn decode(&self, state: &[f64], k: usize, z: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        if z.len() != self.config.latent_dim {
            return Err(SkillError::Shape { what: "latent", expected: self.config.latent_dim, got: z.len() });
        }
        let x = decoder_input(state, k, z, self.config.horizon)?;
        Ok(self.decoder.infer(&Tensor::row(&x))?.into_data())
    }

    /// Learned skill prior `p(z | s)`.
    pub fn skill_prior(&self, state: &[f64]) -> Result<DiagGaussian> {
        self.check_state(state)?;
        let head = self.prior.infer(&Tensor::row(state))?;
        Ok(head_to_gaussian(head.data(), self.config.latent_dim))
    }

    pub fn action_prior(&self, state: &[f64], k: usize, z: &[f64]) -> Result<DiagGaussian> {
        Ok(DiagGaussian { mean: self.decode(state, k, z)?, log_std: self.config.log_sigma_a.clone() })
    }

    pub fn write_archive(&self, ar: &mut TensorArchive) {
        let c = &self.config;
        ar.set_meta("skill.version", SKILL_MODEL_VERSION);
        ar.set_meta("skill.state_dim", c.state_dim);
        ar.set_meta("skill.action_dim", c.action_dim);
        ar.set_meta("skill.horizon", c.horizon);
        ar.set_meta("skill.latent_dim", c.latent_dim);
        ar.set_meta("skill.hidden", join(&c.hidden));
        ar.set_meta("skill.batch_norm", c.batch_norm);
        ar.set_meta("skill.log_sigma_a", join(&c.log_sigma_a));
        ar.put_params("encoder/", &self.encoder.params);
        ar.put_params("decoder/", &self.decoder.params);
        ar.put_params("prior/", &self.prior.params);
    }

    pub fn read_archive(ar: &TensorArchive) -> Result<Self> {
        let version: u32 = ar.meta_parse("skill.version")?;
        if version != SKILL_MODEL_VERSION {
            return Err(SkillError::Checkpoint(format!("unsupported skill model version {version}")));
        }
        let config = SkillModelConfig {
            state_dim: ar.meta_parse("skill.state_dim")?,
            action_dim: ar.meta_parse("skill.action_dim")?,
            horizon: ar.meta_parse("skill.horizon")?,
            latent_dim: ar.meta_parse("skill.latent_dim")?,
            hidden: split(ar.meta("skill.hidden")?)?,
            batch_norm: ar.meta_parse("skill.batch_norm")?,
            log_sigma_a: split(ar.meta("skill.log_sigma_a")?)?,
        };
        config.validate()?;
        Ok(Self {
            encoder: Mlp::from_params(config.encoder_spec(), ar.take_params("encoder/")?)?,
            decoder: Mlp::from_params(config.decoder_spec(), ar.take_params("decoder/")?)?,
            prior: Mlp::from_params(config.prior_spec(), ar.take_params("prior/")?)?,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut ar = TensorArchive::new();
        self.write_archive(&mut ar);
        Ok(ar.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_archive(&TensorArchive::load(path)?)
    }
}

pub fn action_prior(model: &SkillModel, state: &[f64], k: usize, z: &[f64]) -> Result<DiagGaussian> {
    model.action_prior(state, k, z)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn split<T: std::str::FromStr>(s: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| SkillError::Checkpoint(format!("bad list entry {p:?}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model() -> SkillModel {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut cfg = SkillModelConfig::new(4, 2);
        cfg.hidden = vec![16];
        SkillModel::new(cfg, &mut rng).unwrap()
    }

    fn window(m: &SkillModel, v: f64) -> SkillWindow {
        let h = m.horizon();
        SkillWindow { states: vec![vec![v; 4]; h], actions: vec![vec![0.5 * v, -v]; h] }
    }

    #[test]
    fn phase_encoding() {
        let h = 10;
        let k = 13 % h;
        let v = phase_one_hot(k, h).unwrap();
        assert_eq!(v.iter().position(|x| *x == 1.0), Some(3));
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert!(matches!(phase_one_hot(10, 10), Err(SkillError::PhaseOutOfRange { .. })));
    }

    #[test]
    fn encode_is_deterministic_and_well_formed() {
        let m = model();
        let a = m.encode(&window(&m, 0.3)).unwrap();
        let b = m.encode(&window(&m, 0.3)).unwrap();
        assert_eq!(a, b);
        assert!(a.mean.iter().all(|x| x.is_finite()));
        assert!(a.std().iter().all(|s| *s > 0.0));
        let mut bad = window(&m, 0.3);
        bad.actions.pop();
        assert!(m.encode(&bad).is_err());
    }

    #[test]
    fn decode_depends_on_phase_and_rejects_bad_phase() {
        let m = model();
        let s = [0.1, -0.2, 0.3, 0.0];
        let z = vec![0.5; m.latent_dim()];
        assert_ne!(m.decode(&s, 0, &z).unwrap(), m.decode(&s, 4, &z).unwrap());
        assert_eq!(m.decode(&s, 4, &z).unwrap(), m.decode(&s, 4, &z).unwrap());
        assert!(matches!(m.decode(&s, 10, &z), Err(SkillError::PhaseOutOfRange { .. })));
    }

    #[test]
    fn action_prior_wraps_decoder() {
        let m = model();
        let s = [0.1, -0.2, 0.3, 0.0];
        let z = vec![-0.5; m.latent_dim()];
        let p = action_prior(&m, &s, 2, &z).unwrap();
        assert_eq!(p.mean, m.decode(&s, 2, &z).unwrap());
        assert_eq!(p.log_std, vec![-3.0, -3.0]);
    }

    #[test]
    fn archive_round_trip() {
        let m = model();
        let mut ar = TensorArchive::new();
        m.write_archive(&mut ar);
        let mut bytes = Vec::new();
        ar.write_to(&mut bytes).unwrap();
        let back = SkillModel::read_archive(&TensorArchive::read_from(&bytes[..]).unwrap()).unwrap();
        assert_eq!(back.config, m.config);
        assert_eq!(back.encoder.params, m.encoder.params);
        assert_eq!(back.decoder.params, m.decoder.params);
        assert_eq!(back.prior.params, m.prior.params);
    }
}
