//! The training loop: rollouts alternate with high-level updates and, after
//! the warm-up, low-level updates. Also the metrics stream and checkpoints.

use std::fmt::Write as _;

use super::agents::{HighAgent, LowAgent};
use super::buffer::{HighTransition, LowTransition, RecordDims, ReplayBuffer};
use super::rollout::{evaluate, Actor, Rollout, RolloutCursor};
use super::sac::SacAgent;
use super::update::{hl_update, ll_update};
use super::{HrlError, Mode, Result, TrainConfig};
use crate::env::Environment;
use crate::numgrad::{Mlp, TensorArchive};
use crate::rng::{stream, RngState, SimRng, Stream};
use crate::skillspace::SkillModel;

/// Header of the metrics stream. One row per logging interval; rates and
/// divergences are means over the updates made within the interval (0 when
/// none were made), `episode_reward_mean` over training episodes finished
/// within it (the previous value when none finished), and `eval_reward` is
/// the latest deterministic evaluation.
pub const METRICS_HEADER: &str =
    "env_steps,iteration,episode_reward_mean,kl_hl,kl_ll,alpha_z,alpha_a,q_hl_mean,q_ll_mean,wall_contact_steps,eval_reward,ll_updates";

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsRow {
    pub env_steps: usize,
    pub iteration: usize,
    pub episode_reward_mean: f64,
    pub kl_hl: f64,
    pub kl_ll: f64,
    pub alpha_z: f64,
    pub alpha_a: f64,
    pub q_hl_mean: f64,
    pub q_ll_mean: f64,
    pub wall_contact_steps: usize,
    pub eval_reward: f64,
    /// Cumulative low-level (or flat) update steps.
    pub ll_updates: u64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.env_steps,
            self.iteration,
            self.episode_reward_mean,
            self.kl_hl,
            self.kl_ll,
            self.alpha_z,
            self.alpha_a,
            self.q_hl_mean,
            self.q_ll_mean,
            self.wall_contact_steps,
            self.eval_reward,
            self.ll_updates
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 12 {
            return Err(HrlError::Config(format!("metrics row has {} fields, expected 12", f.len())));
        }
        let bad = |i: usize| HrlError::Config(format!("metrics field {i} unparseable: {:?}", f[i]));
        let u = |i: usize| f[i].parse::<usize>().map_err(|_| bad(i));
        let x = |i: usize| f[i].parse::<f64>().map_err(|_| bad(i));
        Ok(Self {
            env_steps: u(0)?,
            iteration: u(1)?,
            episode_reward_mean: x(2)?,
            kl_hl: x(3)?,
            kl_ll: x(4)?,
            alpha_z: x(5)?,
            alpha_a: x(6)?,
            q_hl_mean: x(7)?,
            q_ll_mean: x(8)?,
            wall_contact_steps: u(9)?,
            eval_reward: x(10)?,
            ll_updates: f[11].parse().map_err(|_| bad(11))?,
        })
    }
}

/// Sums over the current logging interval.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Accum {
    ep_reward: f64,
    episodes: usize,
    kl_hl: f64,
    q_hl: f64,
    hl_n: usize,
    kl_ll: f64,
    q_ll: f64,
    ll_n: usize,
    wall: usize,
}

impl Accum {
    const FIELDS: [&'static str; 9] = ["ep_reward", "episodes", "kl_hl", "q_hl", "hl_n", "kl_ll", "q_ll", "ll_n", "wall"];

    fn values(&self) -> [f64; 9] {
        [
            self.ep_reward,
            self.episodes as f64,
            self.kl_hl,
            self.q_hl,
            self.hl_n as f64,
            self.kl_ll,
            self.q_ll,
            self.ll_n as f64,
            self.wall as f64,
        ]
    }

    fn from_values(v: [f64; 9]) -> Self {
        Self {
            ep_reward: v[0],
            episodes: v[1] as usize,
            kl_hl: v[2],
            q_hl: v[3],
            hl_n: v[4] as usize,
            kl_ll: v[5],
            q_ll: v[6],
            ll_n: v[7] as usize,
            wall: v[8] as usize,
        }
    }
}

/// The learners of one run.
#[derive(Clone, Debug)]
pub enum Agents {
    Hierarchical { model: Box<SkillModel>, high: HighAgent, low: LowAgent },
    Flat(SacAgent),
}

/// Stage-2 run state. Owns the environment, both replay buffers and every
/// random stream, so a checkpoint taken between episodes resumes exactly.
pub struct Trainer<E: Environment + Clone> {
    pub cfg: TrainConfig,
    pub agents: Agents,
    env: E,
    eval_env: E,
    hl_buf: ReplayBuffer<HighTransition>,
    ll_buf: ReplayBuffer<LowTransition>,
    dims: RecordDims,
    cursor: RolloutCursor,
    rollout_rng: SimRng,
    batch_rng: SimRng,
    env_steps: usize,
    iteration: usize,
    ll_updates: u64,
    first_ll_update_iteration: Option<usize>,
    acc: Accum,
    last_episode_reward: f64,
    last_eval: f64,
    metrics: Vec<MetricsRow>,
}

impl<E: Environment + Clone> Trainer<E> {
    /// `model` is required for every hierarchical mode and ignored by flat SAC.
    pub fn new(cfg: TrainConfig, env: E, model: Option<SkillModel>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut init = stream(seed, Stream::Init);
        let (sd, ad) = (env.observation_dim(), env.action_dim());
        let (agents, dims) = if cfg.mode.is_hierarchical() {
            let model = model.ok_or_else(|| HrlError::Config(format!("mode {} needs a skill model", cfg.mode)))?;
            let c = &model.config;
            if c.state_dim != sd || c.action_dim != ad {
                return Err(HrlError::Config(format!(
                    "skill model is for state/action dims {}/{}, environment has {sd}/{ad}",
                    c.state_dim, c.action_dim
                )));
            }
            if cfg.steps_per_iteration % c.horizon != 0 {
                return Err(HrlError::Config(format!(
                    "steps_per_iteration {} is not a multiple of the skill horizon {}",
                    cfg.steps_per_iteration, c.horizon
                )));
            }
            let high = HighAgent::from_skill_model(&model, &cfg, &mut init)?;
            let low = LowAgent::from_skill_model(&model, &cfg, &mut init)?;
            let dims = RecordDims { state: sd, latent: c.latent_dim, action: ad };
            (Agents::Hierarchical { model: Box::new(model), high, low }, dims)
        } else {
            (Agents::Flat(SacAgent::new(sd, ad, &cfg, &mut init)?), RecordDims { state: sd, latent: 0, action: ad })
        };
        Ok(Self {
            hl_buf: ReplayBuffer::new(cfg.hl_capacity),
            ll_buf: ReplayBuffer::new(cfg.ll_capacity),
            cfg,
            agents,
            eval_env: env.clone(),
            env,
            dims,
            cursor: RolloutCursor::new(),
            rollout_rng: stream(seed, Stream::Rollout),
            batch_rng: stream(seed, Stream::Batch),
            env_steps: 0,
            iteration: 0,
            ll_updates: 0,
            first_ll_update_iteration: None,
            acc: Accum::default(),
            last_episode_reward: 0.0,
            last_eval: 0.0,
            metrics: Vec::new(),
        })
    }

    pub fn env_steps(&self) -> usize {
        self.env_steps
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.metrics
    }

    /// Iteration of the first low-level (or flat) update, if any.
    pub fn first_ll_update_iteration(&self) -> Option<usize> {
        self.first_ll_update_iteration
    }

    pub fn at_episode_boundary(&self) -> bool {
        self.cursor.at_episode_boundary()
    }

    pub fn high(&self) -> Option<&HighAgent> {
        match &self.agents {
            Agents::Hierarchical { high, .. } => Some(high),
            Agents::Flat(_) => None,
        }
    }

    pub fn low(&self) -> Option<&LowAgent> {
        match &self.agents {
            Agents::Hierarchical { low, .. } => Some(low),
            Agents::Flat(_) => None,
        }
    }

    fn actor(&self) -> Actor<'_> {
        match &self.agents {
            Agents::Hierarchical { high, low, .. } => Actor::Hierarchical { high, low },
            Agents::Flat(s) => Actor::Flat(s),
        }
    }

    /// Deterministic evaluation of the current policies.
    pub fn evaluate(&self) -> Result<f64> {
        evaluate(&self.eval_env, self.actor(), self.cfg.eval_episodes)
    }

    fn absorb(&mut self, r: Rollout) {
        for ep in &r.episodes {
            self.acc.ep_reward += ep.reward;
            self.acc.episodes += 1;
        }
        self.acc.wall += r.wall_contact_steps;
        for t in r.high {
            self.hl_buf.push(t);
        }
        for t in r.low {
            self.ll_buf.push(t);
        }
    }

    /// One iteration: collect, then update. Returns the metrics row if a
    /// logging boundary was crossed.
    pub fn iterate(&mut self) -> Result<Option<MetricsRow>> {
        let n = self.cfg.steps_per_iteration;
        let actor = match &self.agents {
            Agents::Hierarchical { high, low, .. } => Actor::Hierarchical { high, low },
            Agents::Flat(s) => Actor::Flat(s),
        };
        let r = self.cursor.collect(&mut self.env, actor, n, &mut self.rollout_rng)?;
        self.absorb(r);
        let before = self.env_steps;
        self.env_steps += n;

        let cfg = &self.cfg;
        let ready = self.env_steps >= cfg.prefill_steps && self.ll_buf.len() >= cfg.batch_size;
        match &mut self.agents {
            Agents::Hierarchical { model, high, low } if ready && self.hl_buf.len() >= cfg.batch_size => {
                for _ in 0..cfg.hl_updates_per_iteration {
                    let batch = self.hl_buf.sample(cfg.batch_size, &mut self.batch_rng);
                    let s = hl_update(high, &batch, model, cfg, &mut self.batch_rng)?;
                    self.acc.kl_hl += s.kl;
                    self.acc.q_hl += s.critic.q_mean;
                    self.acc.hl_n += 1;
                }
                if !cfg.flags.freeze_ll && self.iteration >= cfg.warmup_iterations() {
                    for _ in 0..cfg.ll_updates_per_iteration {
                        let batch = self.ll_buf.sample(cfg.batch_size, &mut self.batch_rng);
                        let s = ll_update(low, high, &batch, model, cfg, &mut self.batch_rng)?;
                        self.acc.kl_ll += s.divergence;
                        self.acc.q_ll += s.critic.q_mean;
                        self.acc.ll_n += 1;
                        self.ll_updates += 1;
                        self.first_ll_update_iteration.get_or_insert(self.iteration);
                    }
                }
            }
            Agents::Flat(sac) if ready => {
                for _ in 0..cfg.ll_updates_per_iteration {
                    let batch = self.ll_buf.sample(cfg.batch_size, &mut self.batch_rng);
                    let s = sac.update(&batch, cfg, &mut self.batch_rng)?;
                    self.acc.kl_ll += s.log_prob;
                    self.acc.q_ll += s.critic.q_mean;
                    self.acc.ll_n += 1;
                    self.ll_updates += 1;
                    self.first_ll_update_iteration.get_or_insert(self.iteration);
                }
            }
            _ => {}
        }
        self.iteration += 1;

        let crossed = |every: usize| before / every != self.env_steps / every;
        if crossed(self.cfg.eval_interval) {
            self.last_eval = self.evaluate()?;
        }
        if crossed(self.cfg.log_interval) {
            let row = self.emit_row();
            self.metrics.push(row);
            return Ok(Some(row));
        }
        Ok(None)
    }

    fn emit_row(&mut self) -> MetricsRow {
        let a = std::mem::take(&mut self.acc);
        let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
        if a.episodes > 0 {
            self.last_episode_reward = a.ep_reward / a.episodes as f64;
        }
        let (alpha_z, alpha_a) = match &self.agents {
            Agents::Hierarchical { high, low, .. } => (high.alpha(), low.alpha()),
            Agents::Flat(s) => (0.0, s.alpha()),
        };
        MetricsRow {
            env_steps: self.env_steps,
            iteration: self.iteration,
            episode_reward_mean: self.last_episode_reward,
            kl_hl: mean(a.kl_hl, a.hl_n),
            kl_ll: mean(a.kl_ll, a.ll_n),
            alpha_z,
            alpha_a,
            q_hl_mean: mean(a.q_hl, a.hl_n),
            q_ll_mean: mean(a.q_ll, a.ll_n),
            wall_contact_steps: a.wall,
            eval_reward: self.last_eval,
            ll_updates: self.ll_updates,
        }
    }

    /// Iterates until `total_steps`, calling `on_row` for each metrics row.
    pub fn run(&mut self, mut on_row: impl FnMut(&MetricsRow)) -> Result<()> {
        while self.env_steps < self.cfg.total_steps {
            if let Some(row) = self.iterate()? {
                on_row(&row);
            }
        }
        Ok(())
    }

    /// Metrics stream as delimited text with the documented header.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.metrics {
            let _ = writeln!(s, "{}", r.to_csv());
        }
        s
    }

    /// Full run state. Only resumable between episodes; otherwise the
    /// archive is marked as a diagnostic snapshot.
    pub fn to_archive(&self, fingerprint: &str) -> TensorArchive {
        let mut ar = TensorArchive::new();
        ar.set_meta("train.mode", self.cfg.mode);
        ar.set_meta("train.fingerprint", fingerprint);
        ar.set_meta("train.resumable", self.at_episode_boundary());
        ar.set_meta("train.env_steps", self.env_steps);
        ar.set_meta("train.iteration", self.iteration);
        ar.set_meta("train.ll_updates", self.ll_updates);
        ar.set_meta("train.first_ll", self.first_ll_update_iteration.map_or("none".to_string(), |i| i.to_string()));
        ar.set_meta("train.last_episode_reward", self.last_episode_reward);
        ar.set_meta("train.last_eval", self.last_eval);
        for (k, v) in Accum::FIELDS.iter().zip(self.acc.values()) {
            ar.set_meta(format!("train.acc.{k}"), v);
        }
        ar.set_meta("train.metrics", self.metrics.iter().map(|r| r.to_csv()).collect::<Vec<_>>().join(";"));
        ar.set_meta("rng.rollout", RngState::capture(&self.rollout_rng).encode());
        ar.set_meta("rng.batch", RngState::capture(&self.batch_rng).encode());
        match &self.agents {
            Agents::Hierarchical { high, low, .. } => {
                put_policy_and_critic(&mut ar, "high", &high.policy.net, &high.critic);
                ar.set_meta("high.log_alpha", high.log_alpha);
                put_policy_and_critic(&mut ar, "low", &low.policy.net, &low.critic);
                ar.set_meta("low.log_alpha", low.log_alpha);
            }
            Agents::Flat(s) => {
                put_policy_and_critic(&mut ar, "flat", &s.policy.net, &s.critic);
                ar.set_meta("flat.log_alpha", s.log_alpha);
            }
        }
        self.hl_buf.write_archive(&mut ar, "buffer.hl", &self.dims);
        self.ll_buf.write_archive(&mut ar, "buffer.ll", &self.dims);
        ar
    }

    /// Rebuilds a trainer from [`Trainer::to_archive`] output. `cfg`, `env`,
    /// `model` and `seed` must be the ones the run was started with.
    pub fn from_archive(ar: &TensorArchive, cfg: TrainConfig, env: E, model: Option<SkillModel>, seed: u64) -> Result<Self> {
        let mode: Mode = ar.meta("train.mode")?.parse()?;
        if mode != cfg.mode {
            return Err(HrlError::Checkpoint(format!("checkpoint is for mode {mode}, config says {}", cfg.mode)));
        }
        if ar.meta("train.resumable")? != "true" {
            return Err(HrlError::Checkpoint("snapshot was taken mid-episode and cannot be resumed".into()));
        }
        let mut t = Self::new(cfg, env, model, seed)?;
        t.env_steps = ar.meta_parse("train.env_steps")?;
        t.iteration = ar.meta_parse("train.iteration")?;
        t.ll_updates = ar.meta_parse("train.ll_updates")?;
        t.first_ll_update_iteration = match ar.meta("train.first_ll")? {
            "none" => None,
            s => Some(s.parse().map_err(|_| HrlError::Checkpoint("bad train.first_ll".into()))?),
        };
        t.last_episode_reward = ar.meta_parse("train.last_episode_reward")?;
        t.last_eval = ar.meta_parse("train.last_eval")?;
        let mut acc = [0.0; 9];
        for (slot, k) in acc.iter_mut().zip(Accum::FIELDS) {
            *slot = ar.meta_parse(&format!("train.acc.{k}"))?;
        }
        t.acc = Accum::from_values(acc);
        let rows = ar.meta("train.metrics")?;
        t.metrics = rows.split(';').filter(|s| !s.is_empty()).map(MetricsRow::parse).collect::<Result<_>>()?;
        let rng = |key: &str| -> Result<SimRng> {
            RngState::decode(ar.meta(key)?)
                .map(|s| s.restore())
                .ok_or_else(|| HrlError::Checkpoint(format!("bad {key}")))
        };
        t.rollout_rng = rng("rng.rollout")?;
        t.batch_rng = rng("rng.batch")?;
        match &mut t.agents {
            Agents::Hierarchical { high, low, .. } => {
                take_policy_and_critic(ar, "high", &mut high.policy.net, &mut high.critic)?;
                high.log_alpha = ar.meta_parse("high.log_alpha")?;
                take_policy_and_critic(ar, "low", &mut low.policy.net, &mut low.critic)?;
                low.log_alpha = ar.meta_parse("low.log_alpha")?;
            }
            Agents::Flat(s) => {
                take_policy_and_critic(ar, "flat", &mut s.policy.net, &mut s.critic)?;
                s.log_alpha = ar.meta_parse("flat.log_alpha")?;
            }
        }
        t.hl_buf = ReplayBuffer::read_archive(ar, "buffer.hl", &t.dims)?;
        t.ll_buf = ReplayBuffer::read_archive(ar, "buffer.ll", &t.dims)?;
        Ok(t)
    }
}

fn put_policy_and_critic(ar: &mut TensorArchive, prefix: &str, policy: &Mlp, critic: &super::TwinCritic) {
    ar.put_params(&format!("{prefix}.policy/"), &policy.params);
    for i in 0..2 {
        ar.put_params(&format!("{prefix}.q{i}/"), &critic.q[i].params);
        ar.put_params(&format!("{prefix}.target{i}/"), &critic.target[i].params);
    }
}

fn take_policy_and_critic(ar: &TensorArchive, prefix: &str, policy: &mut Mlp, critic: &mut super::TwinCritic) -> Result<()> {
    let load = |net: &mut Mlp, name: String| -> Result<()> {
        *net = Mlp::from_params(net.spec().clone(), ar.take_params(&name)?)?;
        Ok(())
    };
    load(policy, format!("{prefix}.policy/"))?;
    for i in 0..2 {
        load(&mut critic.q[i], format!("{prefix}.q{i}/"))?;
        load(&mut critic.target[i], format!("{prefix}.target{i}/"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::ReachEnv;
    use crate::skillspace::SkillModelConfig;
    use rand::SeedableRng;

    fn model() -> SkillModel {
        let mut c = SkillModelConfig::new(4, 2);
        c.hidden = vec![16];
        c.horizon = 5;
        c.latent_dim = 3;
        SkillModel::new(c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    fn small(mode: Mode) -> TrainConfig {
        let mut c = if mode == Mode::FlatSac { TrainConfig::flat_sac() } else { TrainConfig::new(mode) };
        c.total_steps = 1_000;
        c.hl_warmup_steps = 400;
        c.prefill_steps = 200;
        c.steps_per_iteration = if mode == Mode::FlatSac { 1 } else { 10 };
        c.batch_size = 16;
        c.critic_hidden = vec![16];
        c.log_interval = 100;
        c.eval_interval = 500;
        c.eval_episodes = 1;
        c
    }

    fn trainer(mode: Mode, seed: u64) -> Trainer<ReachEnv> {
        Trainer::new(small(mode), ReachEnv::new(0.1, 50), Some(model()), seed).unwrap()
    }

    #[test]
    fn warmup_gates_first_low_level_update() {
        let mut t = trainer(Mode::SkillCritic, 1);
        t.run(|_| {}).unwrap();
        let first = t.first_ll_update_iteration().unwrap();
        assert_eq!(first, t.cfg.warmup_iterations());
        let rows = t.metrics();
        assert!(rows.iter().filter(|r| r.env_steps <= 400).all(|r| r.ll_updates == 0 && r.kl_ll == 0.0));
        assert!(rows.last().unwrap().ll_updates > 0);
    }

    #[test]
    fn spirl_never_touches_low_level() {
        let mut t = trainer(Mode::Spirl, 2);
        let before = t.low().unwrap().policy.net.params.checksum();
        let hb = t.high().unwrap().policy.net.params.checksum();
        t.run(|_| {}).unwrap();
        assert_eq!(t.low().unwrap().policy.net.params.checksum(), before);
        assert_ne!(t.high().unwrap().policy.net.params.checksum(), hb);
        assert_eq!(t.first_ll_update_iteration(), None);
    }

    #[test]
    fn same_seed_same_metrics_for_every_mode() {
        for mode in Mode::ALL {
            let mut a = trainer(mode, 3);
            let mut b = trainer(mode, 3);
            a.run(|_| {}).unwrap();
            b.run(|_| {}).unwrap();
            assert_eq!(a.metrics_csv(), b.metrics_csv(), "{mode}");
            assert_eq!(a.metrics().len(), 10);
        }
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        for mode in [Mode::SkillCritic, Mode::FlatSac] {
            let mut full = trainer(mode, 4);
            full.run(|_| {}).unwrap();

            let mut part = trainer(mode, 4);
            while !(part.env_steps() >= 600 && part.at_episode_boundary()) {
                part.iterate().unwrap();
            }
            let mut bytes = Vec::new();
            part.to_archive("fp").write_to(&mut bytes).unwrap();
            let ar = TensorArchive::read_from(bytes.as_slice()).unwrap();
            let mut resumed = Trainer::from_archive(&ar, small(mode), ReachEnv::new(0.1, 50), Some(model()), 4).unwrap();
            resumed.run(|_| {}).unwrap();
            assert_eq!(resumed.metrics_csv(), full.metrics_csv(), "{mode}");
        }
    }

    #[test]
    fn rejects_mismatched_model_and_mid_episode_resume() {
        let mut c = SkillModelConfig::new(3, 2);
        c.hidden = vec![8];
        let m = SkillModel::new(c, &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(Trainer::new(small(Mode::SkillCritic), ReachEnv::default(), Some(m), 0).is_err());
        assert!(Trainer::new(small(Mode::SkillCritic), ReachEnv::default(), None, 0).is_err());

        let mut t = trainer(Mode::SkillCritic, 5);
        for _ in 0..3 {
            t.iterate().unwrap();
        }
        assert!(!t.at_episode_boundary());
        let ar = t.to_archive("fp");
        assert!(Trainer::from_archive(&ar, small(Mode::SkillCritic), ReachEnv::new(0.1, 50), Some(model()), 5).is_err());
    }

    #[test]
    fn metrics_rows_round_trip() {
        let r = MetricsRow { env_steps: 10, kl_ll: 0.1 + 0.2, alpha_a: 1e-300, eval_reward: -3.5, ll_updates: 7, ..Default::default() };
        assert_eq!(MetricsRow::parse(&r.to_csv()).unwrap(), r);
        assert_eq!(METRICS_HEADER.split(',').count(), 12);
    }
}
