use std::fmt;
use std::str::FromStr;

use super::HrlError;

/// Training variant. Each maps to a fixed set of [`Flags`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Both levels fine-tuned, low-level targets coupled to the high level.
    SkillCritic,
    /// High level only; the low level stays the pretrained decoder.
    Spirl,
    /// Low-level targets never bootstrap from the high level.
    IndependentQ,
    /// Low level regularized by entropy instead of the action prior.
    UniformLlPrior,
    /// Single-level soft actor-critic on primitive actions.
    FlatSac,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::SkillCritic, Mode::Spirl, Mode::IndependentQ, Mode::UniformLlPrior, Mode::FlatSac];

    pub fn name(self) -> &'static str {
        match self {
            Mode::SkillCritic => "skill-critic",
            Mode::Spirl => "spirl",
            Mode::IndependentQ => "independent-q",
            Mode::UniformLlPrior => "uniform-ll-prior",
            Mode::FlatSac => "flat-sac",
        }
    }

    pub fn flags(self) -> Flags {
        let mut f = Flags::default();
        match self {
            Mode::SkillCritic => {}
            Mode::Spirl => f.freeze_ll = true,
            Mode::IndependentQ => f.independent_q = true,
            Mode::UniformLlPrior => f.uniform_ll_prior = true,
            Mode::FlatSac => f.flat_sac = true,
        }
        f
    }

    pub fn is_hierarchical(self) -> bool {
        self != Mode::FlatSac
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = HrlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| HrlError::Config(format!("unknown mode {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flags {
    pub independent_q: bool,
    pub uniform_ll_prior: bool,
    pub freeze_ll: bool,
    pub flat_sac: bool,
}

impl Flags {
    pub fn validate(&self) -> Result<(), HrlError> {
        let others = self.independent_q || self.uniform_ll_prior || self.freeze_ll;
        if self.flat_sac && others {
            return Err(HrlError::Config("flat_sac excludes every other flag".into()));
        }
        Ok(())
    }
}

/// Stage-2 hyperparameters. Step counts are environment steps.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub flags: Flags,
    /// Per-step discount of the low level and of flat SAC.
    pub gamma: f64,
    /// Per-skill discount of the high level.
    pub gamma_z: f64,
    pub total_steps: usize,
    /// Environment steps of high-level-only training before the low level
    /// starts updating.
    pub hl_warmup_steps: usize,
    /// Steps collected with the initial policies before any update.
    pub prefill_steps: usize,
    /// Environment steps per iteration; a multiple of the skill horizon.
    pub steps_per_iteration: usize,
    pub hl_updates_per_iteration: usize,
    pub ll_updates_per_iteration: usize,
    pub batch_size: usize,
    pub hl_capacity: usize,
    pub ll_capacity: usize,
    pub policy_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr_z: f64,
    pub alpha_lr_a: f64,
    pub adam_beta2: f64,
    pub delta_z: f64,
    pub delta_a: f64,
    pub alpha_z_init: f64,
    pub alpha_a_init: f64,
    /// Target entropy of flat SAC and of the uniform-prior ablation,
    /// as a negative multiple of the action dimension.
    pub target_entropy_per_dim: f64,
    pub tau: f64,
    pub critic_hidden: Vec<usize>,
    pub log_interval: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
}

impl TrainConfig {
    /// Defaults for `mode`. Flat SAC updates every step with a faster
    /// temperature; every hierarchical mode shares one preset.
    pub fn new(mode: Mode) -> Self {
        let base = Self {
            mode,
            flags: mode.flags(),
            gamma: 0.99,
            gamma_z: 0.99,
            total_steps: 150_000,
            hl_warmup_steps: 50_000,
            prefill_steps: 3_000,
            steps_per_iteration: 10,
            hl_updates_per_iteration: 1,
            ll_updates_per_iteration: 2,
            batch_size: 64,
            hl_capacity: 20_000,
            ll_capacity: 100_000,
            policy_lr: 3e-4,
            critic_lr: 3e-4,
            alpha_lr_z: 1e-2,
            alpha_lr_a: 1e-4,
            adam_beta2: 0.99,
            delta_z: 1.0,
            delta_a: 80.0,
            alpha_z_init: 0.1,
            alpha_a_init: 1e-3,
            target_entropy_per_dim: -1.0,
            tau: 5e-3,
            critic_hidden: vec![64, 64],
            log_interval: 1_000,
            eval_interval: 5_000,
            eval_episodes: 4,
        };
        if mode == Mode::FlatSac {
            Self { ll_updates_per_iteration: 1, steps_per_iteration: 1, prefill_steps: 1_000, alpha_lr_a: 3e-3, alpha_a_init: 0.1, ..base }
        } else {
            base
        }
    }

    pub fn flat_sac() -> Self {
        Self::new(Mode::FlatSac)
    }

    /// Switches mode, keeping every other field.
    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
        self.flags = mode.flags();
    }

    pub fn validate(&self) -> Result<(), HrlError> {
        self.flags.validate()?;
        if self.flags != self.mode.flags() {
            return Err(HrlError::Config(format!("flags {:?} disagree with mode {}", self.flags, self.mode)));
        }
        let bad = |m: &str| Err(HrlError::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gamma_z) {
            return bad("discounts must lie in [0, 1]");
        }
        if self.steps_per_iteration == 0 || self.batch_size == 0 || self.log_interval == 0 || self.eval_interval == 0 {
            return bad("steps_per_iteration, batch_size, log_interval and eval_interval must be positive");
        }
        if self.hl_capacity < self.batch_size || self.ll_capacity < self.batch_size {
            return bad("replay capacities must hold at least one batch");
        }
        let rates = [self.policy_lr, self.critic_lr, self.alpha_lr_z, self.alpha_lr_a, self.tau, self.alpha_z_init, self.alpha_a_init];
        if rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return bad("learning rates, tau and initial temperatures must be positive");
        }
        if !(self.tau <= 1.0) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("tau must be at most 1 and adam_beta2 in [0, 1)");
        }
        if !(self.delta_z >= 0.0 && self.delta_a.is_finite()) {
            return bad("target divergences must be finite");
        }
        if self.critic_hidden.is_empty() || self.critic_hidden.contains(&0) {
            return bad("critic_hidden needs at least one positive width");
        }
        Ok(())
    }

    /// Iteration index from which the low level may update.
    pub fn warmup_iterations(&self) -> usize {
        self.hl_warmup_steps.div_ceil(self.steps_per_iteration)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_parse_and_map_to_flags() {
        for m in Mode::ALL {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
            assert!(m.flags().validate().is_ok());
            assert!(TrainConfig::new(m).validate().is_ok());
        }
        assert_eq!("uniform_ll_prior".parse::<Mode>().unwrap(), Mode::UniformLlPrior);
        assert!("nope".parse::<Mode>().is_err());
        assert!(Mode::Spirl.flags().freeze_ll);
    }

    #[test]
    fn flat_sac_excludes_other_flags() {
        let f = Flags { flat_sac: true, freeze_ll: true, ..Flags::default() };
        assert!(f.validate().is_err());
        let mut c = TrainConfig::new(Mode::SkillCritic);
        c.flags.independent_q = true;
        assert!(c.validate().is_err());
        c.set_mode(Mode::IndependentQ);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn warmup_in_iterations() {
        let mut c = TrainConfig::new(Mode::SkillCritic);
        c.hl_warmup_steps = 95;
        c.steps_per_iteration = 10;
        assert_eq!(c.warmup_iterations(), 10);
    }
}
