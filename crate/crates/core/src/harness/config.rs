//! Flat `key = value` run configuration.
//!
//! Every key has a default (see [`KEYS`] and `RunConfig::default()`). Files
//! may contain blank lines and `#` comments. `train.mode` selects a preset
//! for all `train.*` keys and is therefore applied before any other key,
//! wherever it appears; every other assignment is applied in order, so later
//! ones win.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use super::{HarnessError, Result};
use crate::env::PlannerConfig;
use crate::hrl::{Mode, TrainConfig};
use crate::skillspace::{PretrainConfig, SkillModelConfig};

/// Which environment Stage 2 runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnvKind {
    Diagonal,
    CurvyTunnel,
    Reach,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Diagonal => "diagonal",
            EnvKind::CurvyTunnel => "curvy_tunnel",
            EnvKind::Reach => "reach",
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvKind {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "diagonal" => Ok(EnvKind::Diagonal),
            "curvy_tunnel" => Ok(EnvKind::CurvyTunnel),
            "reach" => Ok(EnvKind::Reach),
            _ => Err(HarnessError::Config(format!("unknown env {s:?} (diagonal, curvy_tunnel, reach)"))),
        }
    }
}

/// Key names with a one-line description, in canonical order.
pub const KEYS: &[(&str, &str)] = &[
    ("experiment", "name used to group runs in exported tables"),
    ("seed", "master seed; every random stream derives from it"),
    ("env", "Stage-2 environment: diagonal | curvy_tunnel | reach"),
    ("out", "output directory for artifacts and manifests"),
    ("checkpoint_interval", "environment steps between Stage-2 checkpoints"),
    ("demo.count", "number of planner demonstrations"),
    ("planner.rows", "demonstration layout rows, including the border"),
    ("planner.cols", "demonstration layout columns, including the border"),
    ("planner.wall_prob", "probability that an interior cell is a wall"),
    ("planner.cell_size", "cell edge length"),
    ("planner.max_velocity", "displacement per step at full action"),
    ("planner.goal_threshold", "goal radius"),
    ("planner.speed", "planner action magnitude along the moving axis"),
    ("planner.min_steps", "shortest accepted demonstration"),
    ("planner.max_retries", "layout draws before giving up"),
    ("model.horizon", "skill length H"),
    ("model.latent_dim", "skill latent dimension"),
    ("model.hidden", "hidden widths of encoder, decoder and prior, comma separated"),
    ("model.batch_norm", "batch normalization in Stage-1 networks"),
    ("model.log_sigma_a", "log standard deviation of the action prior"),
    ("pretrain.epochs", "Stage-1 epochs"),
    ("pretrain.steps_per_epoch", "Stage-1 gradient steps per epoch"),
    ("pretrain.batch_size", "Stage-1 windows per batch"),
    ("pretrain.learning_rate", "Stage-1 Adam step size"),
    ("pretrain.beta_vae", "weight of the posterior-to-unit-Gaussian term"),
    ("train.mode", "skill-critic | spirl | independent-q | uniform-ll-prior | flat-sac; resets train.* to its preset"),
    ("train.gamma", "per-step discount"),
    ("train.gamma_z", "per-skill discount"),
    ("train.total_steps", "environment steps of Stage 2"),
    ("train.hl_warmup_steps", "high-level-only steps before the low level updates"),
    ("train.prefill_steps", "steps collected before the first update"),
    ("train.steps_per_iteration", "environment steps per iteration, a multiple of H"),
    ("train.hl_updates_per_iteration", "high-level gradient steps per iteration"),
    ("train.ll_updates_per_iteration", "low-level (or flat) gradient steps per iteration"),
    ("train.batch_size", "replay mini-batch size"),
    ("train.hl_capacity", "high-level replay capacity"),
    ("train.ll_capacity", "low-level replay capacity"),
    ("train.policy_lr", "policy Adam step size"),
    ("train.critic_lr", "critic Adam step size"),
    ("train.alpha_lr_z", "high-level temperature step size"),
    ("train.alpha_lr_a", "low-level temperature step size"),
    ("train.adam_beta2", "Adam second-moment decay"),
    ("train.delta_z", "target skill divergence"),
    ("train.delta_a", "target action divergence"),
    ("train.alpha_z_init", "initial high-level temperature"),
    ("train.alpha_a_init", "initial low-level temperature"),
    ("train.target_entropy_per_dim", "entropy target per action dimension where no prior is used"),
    ("train.tau", "target-network averaging rate"),
    ("train.critic_hidden", "critic and flat-policy hidden widths, comma separated"),
    ("train.log_interval", "environment steps between metrics rows"),
    ("train.eval_interval", "environment steps between evaluations"),
    ("train.eval_episodes", "deterministic evaluation episodes"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub experiment: String,
    pub seed: u64,
    pub env: EnvKind,
    pub out: PathBuf,
    pub checkpoint_interval: usize,
    pub demo_count: usize,
    pub planner: PlannerConfig,
    /// Stage-1 settings; the model's state and action dimensions are filled
    /// from the environment when a run starts.
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut pretrain = PretrainConfig::new(SkillModelConfig::new(4, 2));
        pretrain.epochs = 30;
        Self {
            experiment: "default".into(),
            seed: 0,
            env: EnvKind::Diagonal,
            out: PathBuf::from("runs"),
            checkpoint_interval: 50_000,
            demo_count: 400,
            planner: PlannerConfig::default(),
            pretrain,
            train: TrainConfig::new(Mode::SkillCritic),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| HarnessError::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    value.split(',').map(|w| parse(key, w)).collect()
}

fn widths(v: &[usize]) -> String {
    v.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
}

/// Splits `key=value`, trimming both sides.
pub fn parse_assignment(s: &str) -> Result<(String, String)> {
    let (k, v) = s.split_once('=').ok_or_else(|| HarnessError::Config(format!("expected key=value, got {s:?}")))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(HarnessError::Config(format!("empty key in {s:?}")));
    }
    Ok((k.to_string(), v.trim().to_string()))
}

/// Assignments of a config file, in file order.
pub fn parse_text(text: &str) -> Result<Vec<(String, String)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_assignment(l).map_err(|e| HarnessError::Config(format!("line {}: {e}", i + 1))))
        .collect()
}

impl RunConfig {
    /// Defaults, then `assignments` (with `train.mode` first), then validation.
    pub fn from_assignments<K: AsRef<str>, V: AsRef<str>>(assignments: &[(K, V)]) -> Result<Self> {
        let mut c = Self::default();
        if let Some((_, mode)) = assignments.iter().rev().find(|(k, _)| k.as_ref() == "train.mode") {
            c.set("train.mode", mode.as_ref())?;
        }
        for (k, v) in assignments.iter().filter(|(k, _)| k.as_ref() != "train.mode") {
            c.set(k.as_ref(), v.as_ref())?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_assignments(&parse_text(text)?)
    }

    /// Sets one key. `train.mode` resets every `train.*` key to the preset.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let p = &mut self.planner;
        let s = &mut self.pretrain;
        let t = &mut self.train;
        match key {
            "experiment" => self.experiment = value.to_string(),
            "seed" => self.seed = parse(key, value)?,
            "env" => self.env = value.parse()?,
            "out" => self.out = PathBuf::from(value),
            "checkpoint_interval" => self.checkpoint_interval = parse(key, value)?,
            "demo.count" => self.demo_count = parse(key, value)?,
            "planner.rows" => p.rows = parse(key, value)?,
            "planner.cols" => p.cols = parse(key, value)?,
            "planner.wall_prob" => p.wall_prob = parse(key, value)?,
            "planner.cell_size" => p.cell_size = parse(key, value)?,
            "planner.max_velocity" => p.max_velocity = parse(key, value)?,
            "planner.goal_threshold" => p.goal_threshold = parse(key, value)?,
            "planner.speed" => p.speed = parse(key, value)?,
            "planner.min_steps" => p.min_steps = parse(key, value)?,
            "planner.max_retries" => p.max_retries = parse(key, value)?,
            "model.horizon" => s.model.horizon = parse(key, value)?,
            "model.latent_dim" => s.model.latent_dim = parse(key, value)?,
            "model.hidden" => s.model.hidden = parse_widths(key, value)?,
            "model.batch_norm" => s.model.batch_norm = parse(key, value)?,
            "model.log_sigma_a" => {
                let v: f64 = parse(key, value)?;
                s.model.log_sigma_a.iter_mut().for_each(|x| *x = v);
            }
            "pretrain.epochs" => s.epochs = parse(key, value)?,
            "pretrain.steps_per_epoch" => s.steps_per_epoch = parse(key, value)?,
            "pretrain.batch_size" => s.batch_size = parse(key, value)?,
            "pretrain.learning_rate" => s.learning_rate = parse(key, value)?,
            "pretrain.beta_vae" => s.beta_vae = parse(key, value)?,
            "train.mode" => {
                let mode: Mode = value.parse().map_err(|e| HarnessError::Config(format!("{e}")))?;
                *t = TrainConfig::new(mode);
            }
            "train.gamma" => t.gamma = parse(key, value)?,
            "train.gamma_z" => t.gamma_z = parse(key, value)?,
            "train.total_steps" => t.total_steps = parse(key, value)?,
            "train.hl_warmup_steps" => t.hl_warmup_steps = parse(key, value)?,
            "train.prefill_steps" => t.prefill_steps = parse(key, value)?,
            "train.steps_per_iteration" => t.steps_per_iteration = parse(key, value)?,
            "train.hl_updates_per_iteration" => t.hl_updates_per_iteration = parse(key, value)?,
            "train.ll_updates_per_iteration" => t.ll_updates_per_iteration = parse(key, value)?,
            "train.batch_size" => t.batch_size = parse(key, value)?,
            "train.hl_capacity" => t.hl_capacity = parse(key, value)?,
            "train.ll_capacity" => t.ll_capacity = parse(key, value)?,
            "train.policy_lr" => t.policy_lr = parse(key, value)?,
            "train.critic_lr" => t.critic_lr = parse(key, value)?,
            "train.alpha_lr_z" => t.alpha_lr_z = parse(key, value)?,
            "train.alpha_lr_a" => t.alpha_lr_a = parse(key, value)?,
            "train.adam_beta2" => t.adam_beta2 = parse(key, value)?,
            "train.delta_z" => t.delta_z = parse(key, value)?,
            "train.delta_a" => t.delta_a = parse(key, value)?,
            "train.alpha_z_init" => t.alpha_z_init = parse(key, value)?,
            "train.alpha_a_init" => t.alpha_a_init = parse(key, value)?,
            "train.target_entropy_per_dim" => t.target_entropy_per_dim = parse(key, value)?,
            "train.tau" => t.tau = parse(key, value)?,
            "train.critic_hidden" => t.critic_hidden = parse_widths(key, value)?,
            "train.log_interval" => t.log_interval = parse(key, value)?,
            "train.eval_interval" => t.eval_interval = parse(key, value)?,
            "train.eval_episodes" => t.eval_episodes = parse(key, value)?,
            _ => return Err(HarnessError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (p, s, t) = (&self.planner, &self.pretrain, &self.train);
        let m = &s.model;
        let values = [
            self.experiment.clone(),
            self.seed.to_string(),
            self.env.to_string(),
            self.out.display().to_string(),
            self.checkpoint_interval.to_string(),
            self.demo_count.to_string(),
            p.rows.to_string(),
            p.cols.to_string(),
            p.wall_prob.to_string(),
            p.cell_size.to_string(),
            p.max_velocity.to_string(),
            p.goal_threshold.to_string(),
            p.speed.to_string(),
            p.min_steps.to_string(),
            p.max_retries.to_string(),
            m.horizon.to_string(),
            m.latent_dim.to_string(),
            widths(&m.hidden),
            m.batch_norm.to_string(),
            m.log_sigma_a.first().copied().unwrap_or(0.0).to_string(),
            s.epochs.to_string(),
            s.steps_per_epoch.to_string(),
            s.batch_size.to_string(),
            s.learning_rate.to_string(),
            s.beta_vae.to_string(),
            t.mode.to_string(),
            t.gamma.to_string(),
            t.gamma_z.to_string(),
            t.total_steps.to_string(),
            t.hl_warmup_steps.to_string(),
            t.prefill_steps.to_string(),
            t.steps_per_iteration.to_string(),
            t.hl_updates_per_iteration.to_string(),
            t.ll_updates_per_iteration.to_string(),
            t.batch_size.to_string(),
            t.hl_capacity.to_string(),
            t.ll_capacity.to_string(),
            t.policy_lr.to_string(),
            t.critic_lr.to_string(),
            t.alpha_lr_z.to_string(),
            t.alpha_lr_a.to_string(),
            t.adam_beta2.to_string(),
            t.delta_z.to_string(),
            t.delta_a.to_string(),
            t.alpha_z_init.to_string(),
            t.alpha_a_init.to_string(),
            t.target_entropy_per_dim.to_string(),
            t.tau.to_string(),
            widths(&t.critic_hidden),
            t.log_interval.to_string(),
            t.eval_interval.to_string(),
            t.eval_episodes.to_string(),
        ];
        KEYS.iter().map(|(k, _)| *k).zip(values).collect()
    }

    /// Canonical text: one `key = value` line per key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// [`RunConfig::to_text`] with each key's description as a comment.
    pub fn to_documented_text(&self) -> String {
        let mut s = String::new();
        for ((k, v), (_, doc)) in self.entries().into_iter().zip(KEYS) {
            let _ = writeln!(s, "# {doc}\n{k} = {v}");
        }
        s
    }

    /// Hex SHA-256 of the canonical text.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: &dyn fmt::Display| {
            let m = e.to_string();
            HarnessError::Config(m.strip_prefix("invalid configuration: ").map_or(m.clone(), str::to_string))
        };
        if self.experiment.trim().is_empty() || self.experiment.contains(['\n', '=']) {
            return Err(HarnessError::Config("experiment must be a non-empty single-line name without '='".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(HarnessError::Config("checkpoint_interval must be positive".into()));
        }
        self.planner.validate().map_err(|e| cfg(&e))?;
        self.pretrain.validate().map_err(|e| cfg(&e))?;
        if self.pretrain.model.log_sigma_a.windows(2).any(|w| w[0] != w[1]) {
            return Err(HarnessError::Config("model.log_sigma_a must be shared by every action dimension".into()));
        }
        self.train.validate().map_err(|e| cfg(&e))?;
        if self.train.mode.is_hierarchical() && self.train.steps_per_iteration % self.pretrain.model.horizon != 0 {
            return Err(HarnessError::Config(format!(
                "train.steps_per_iteration {} is not a multiple of model.horizon {}",
                self.train.steps_per_iteration, self.pretrain.model.horizon
            )));
        }
        Ok(())
    }
}
