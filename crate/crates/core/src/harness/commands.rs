//! The five subcommands. Each validates its inputs, then writes its
//! artifacts plus `<command>.config` and `<command>.manifest` into the
//! output directory.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::export::{aggregate, read_metrics, write_table};
use super::pipeline::{generate_dataset, make_trainer, pretrain_config};
use super::{AnyEnv, HarnessError, Result, RunConfig, RunManifest};
use crate::env::{load_dataset, save_dataset, validate_replay, Environment};
use crate::hrl::{Trainer, METRICS_HEADER};
use crate::numgrad::TensorArchive;
use crate::oracle::{run_verification, SuiteConfig, VerifyReport};
use crate::rng::{stream, Stream};
use crate::skillspace::{Pretrainer, SkillModel};

pub const DATASET_FILE: &str = "demos.txt";
pub const PRETRAIN_STATE_FILE: &str = "pretrain_state.sca";
pub const PRETRAIN_METRICS_FILE: &str = "pretrain_metrics.csv";
pub const SKILL_MODEL_FILE: &str = "skill_model.sca";
pub const TRAIN_STATE_FILE: &str = "train_state.sca";
pub const TRAIN_DIAGNOSTIC_FILE: &str = "train_diagnostic.sca";
pub const METRICS_FILE: &str = "metrics.csv";

/// Share of demonstrations replayed against regenerated layouts.
const REPLAY_FRACTION: f64 = 0.01;

/// Creates the output directory and records the config beside the artifacts.
fn prepare(cfg: &RunConfig, command: &str) -> Result<(PathBuf, RunManifest)> {
    let dir = cfg.out.clone();
    fs::create_dir_all(&dir).map_err(HarnessError::io(&dir))?;
    let name = format!("{command}.config");
    let path = dir.join(&name);
    fs::write(&path, cfg.to_documented_text()).map_err(HarnessError::io(&path))?;
    let mut manifest = RunManifest::start(command, &cfg.fingerprint());
    manifest.add(&dir, name)?;
    Ok((dir, manifest))
}

fn check_fingerprint(ar: &TensorArchive, cfg: &RunConfig, what: &str) -> Result<()> {
    let stored = ar.meta("run.fingerprint")?;
    if stored != cfg.fingerprint() {
        return Err(HarnessError::Config(format!("{what} was written by a different configuration")));
    }
    Ok(())
}

/// Generates `demo.count` planner demonstrations, replay-validates a 1%
/// sample and writes `demos.txt`. Returns the dataset path.
pub fn cmd_demo_gen(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let (dir, mut manifest) = prepare(cfg, "demo-gen")?;
    let data = generate_dataset(cfg)?;
    let path = dir.join(DATASET_FILE);
    save_dataset(&path, &data)?;
    validate_replay(&load_dataset(&path)?, REPLAY_FRACTION, &mut stream(cfg.seed, Stream::Eval))?;
    manifest.add(&dir, DATASET_FILE)?;
    manifest.finish(&dir)?;
    Ok(path)
}

/// Fits the skill model on `dataset`, checkpointing after every epoch.
/// With `resume`, continues from an existing checkpoint of the same
/// configuration. On divergence the epochs completed so far stay on disk.
/// Returns the model path.
pub fn cmd_pretrain(cfg: &RunConfig, dataset: &Path, resume: bool) -> Result<PathBuf> {
    cfg.validate()?;
    if !dataset.is_file() {
        return Err(HarnessError::Config(format!("dataset {} does not exist", dataset.display())));
    }
    let data = load_dataset(dataset)?;
    let (dir, mut manifest) = prepare(cfg, "pretrain")?;
    let state = dir.join(PRETRAIN_STATE_FILE);
    let mut trainer = if resume && state.exists() {
        let ar = TensorArchive::load(&state)?;
        check_fingerprint(&ar, cfg, "pretraining checkpoint")?;
        Pretrainer::from_archive(&ar, &data)?
    } else {
        Pretrainer::new(pretrain_config(cfg, &data), &data, cfg.seed)?
    };

    let metrics = dir.join(PRETRAIN_METRICS_FILE);
    let mut lines = vec!["epoch,reconstruction,latent_kl,prior_kl,total".to_string()];
    let line = |e: &crate::skillspace::EpochReport| {
        format!("{},{},{},{},{}", e.epoch, e.mean.reconstruction, e.mean.latent_kl, e.mean.prior_kl, e.mean.total)
    };
    lines.extend(trainer.history.iter().map(line));
    let outcome = loop {
        if trainer.epochs_done() >= trainer.config.epochs {
            break Ok(());
        }
        match trainer.run_epoch(&data) {
            Ok(report) => {
                lines.push(line(&report));
                fs::write(&metrics, lines.join("\n") + "\n").map_err(HarnessError::io(&metrics))?;
                let mut ar = trainer.to_archive();
                ar.set_meta("run.fingerprint", cfg.fingerprint());
                ar.save(&state)?;
            }
            Err(e) => break Err(HarnessError::from(e)),
        }
    };
    fs::write(&metrics, lines.join("\n") + "\n").map_err(HarnessError::io(&metrics))?;
    manifest.add(&dir, PRETRAIN_METRICS_FILE)?;
    if state.exists() {
        manifest.add(&dir, PRETRAIN_STATE_FILE)?;
    }
    if outcome.is_ok() {
        trainer.model.save(&dir.join(SKILL_MODEL_FILE))?;
        manifest.add(&dir, SKILL_MODEL_FILE)?;
    }
    manifest.finish(&dir)?;
    outcome.map(|()| dir.join(SKILL_MODEL_FILE))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub metrics: PathBuf,
    pub env_steps: usize,
    /// Deterministic evaluation return of the final policies.
    pub final_eval: f64,
}

/// Loads a skill model and checks it against the configured environment.
fn load_model(cfg: &RunConfig, skill: Option<&Path>) -> Result<Option<SkillModel>> {
    if !cfg.train.mode.is_hierarchical() {
        return Ok(None);
    }
    let path = skill.ok_or_else(|| HarnessError::Config(format!("mode {} needs a skill model checkpoint", cfg.train.mode)))?;
    if !path.is_file() {
        return Err(HarnessError::Config(format!("skill model {} does not exist", path.display())));
    }
    let model = SkillModel::load(path)?;
    let env = AnyEnv::new(cfg.env)?;
    let c = &model.config;
    if (c.state_dim, c.action_dim) != (env.observation_dim(), env.action_dim()) {
        return Err(HarnessError::Config(format!(
            "skill model expects state/action widths {}/{}, env {} has {}/{}",
            c.state_dim,
            c.action_dim,
            cfg.env,
            env.observation_dim(),
            env.action_dim()
        )));
    }
    if cfg.train.steps_per_iteration % c.horizon != 0 {
        return Err(HarnessError::Config(format!(
            "train.steps_per_iteration {} is not a multiple of the model horizon {}",
            cfg.train.steps_per_iteration, c.horizon
        )));
    }
    Ok(Some(model))
}

/// Runs Stage 2, streaming `metrics.csv` and checkpointing at the first
/// episode boundary after every `checkpoint_interval` steps. With `resume`,
/// continues from the last checkpoint of the same configuration. If an
/// update fails, a diagnostic snapshot is written before the error returns.
pub fn cmd_train(cfg: &RunConfig, skill: Option<&Path>, resume: bool) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = load_model(cfg, skill)?;
    let (dir, mut manifest) = prepare(cfg, "train")?;
    let state = dir.join(TRAIN_STATE_FILE);
    let fingerprint = cfg.fingerprint();
    let mut trainer: Trainer<AnyEnv> = if resume && state.exists() {
        let ar = TensorArchive::load(&state)?;
        check_fingerprint(&ar, cfg, "training checkpoint")?;
        Trainer::from_archive(&ar, cfg.train.clone(), AnyEnv::new(cfg.env)?, model, cfg.seed)?
    } else {
        make_trainer(cfg, model)?
    };

    let metrics_path = dir.join(METRICS_FILE);
    let file = fs::File::create(&metrics_path).map_err(HarnessError::io(&metrics_path))?;
    let mut metrics = std::io::BufWriter::new(file);
    let mut write = |line: &str| -> Result<()> {
        writeln!(metrics, "{line}").and_then(|()| metrics.flush()).map_err(HarnessError::io(&metrics_path))
    };
    write(METRICS_HEADER)?;
    for r in trainer.metrics() {
        write(&r.to_csv())?;
    }

    let save = |t: &Trainer<AnyEnv>, path: &Path| -> Result<()> {
        let mut ar = t.to_archive(&fingerprint);
        ar.set_meta("run.fingerprint", &fingerprint);
        Ok(ar.save(path)?)
    };
    let every = cfg.checkpoint_interval;
    let mut next_checkpoint = (trainer.env_steps() / every + 1) * every;
    while trainer.env_steps() < cfg.train.total_steps {
        match trainer.iterate() {
            Ok(row) => {
                if let Some(row) = row {
                    write(&row.to_csv())?;
                }
                if trainer.env_steps() >= next_checkpoint && trainer.at_episode_boundary() {
                    save(&trainer, &state)?;
                    next_checkpoint = (trainer.env_steps() / every + 1) * every;
                }
            }
            Err(e) => {
                save(&trainer, &dir.join(TRAIN_DIAGNOSTIC_FILE))?;
                manifest.add(&dir, METRICS_FILE)?;
                manifest.add(&dir, TRAIN_DIAGNOSTIC_FILE)?;
                manifest.finish(&dir)?;
                return Err(e.into());
            }
        }
    }
    save(&trainer, &state)?;
    let final_eval = trainer.evaluate()?;
    manifest.add(&dir, METRICS_FILE)?;
    manifest.add(&dir, TRAIN_STATE_FILE)?;
    manifest.finish(&dir)?;
    Ok(TrainOutcome { metrics: metrics_path, env_steps: trainer.env_steps(), final_eval })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyOptions {
    pub instances: usize,
    pub seed: u64,
    /// Negative control: corrupt the termination rule so the suite must fail.
    pub mutate_beta: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { instances: 50, seed: 0, mutate_beta: false }
    }
}

/// Runs the oracle suite. Any violated identity is a verification error
/// whose message is the full report, naming instance seeds.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<VerifyReport> {
    if opts.instances == 0 {
        return Err(HarnessError::Config("verify needs at least one instance".into()));
    }
    let cfg = SuiteConfig { instances: opts.instances, seed: opts.seed, mutate_beta: opts.mutate_beta, ..SuiteConfig::default() };
    let report = run_verification(&cfg)?;
    if report.passed() {
        Ok(report)
    } else {
        Err(HarnessError::Verification(report.render()))
    }
}

/// Groups metrics files by experiment and writes `<experiment>.csv` per
/// group into `out`. Returns the tables written and any resampling warnings.
pub fn cmd_export(inputs: &[PathBuf], out: &Path) -> Result<(Vec<PathBuf>, Vec<String>)> {
    if inputs.is_empty() {
        return Err(HarnessError::Config("export needs at least one metrics file".into()));
    }
    let mut groups: BTreeMap<String, Vec<_>> = BTreeMap::new();
    for p in inputs {
        let s = read_metrics(p)?;
        groups.entry(s.experiment.clone()).or_default().push(s);
    }
    fs::create_dir_all(out).map_err(HarnessError::io(out))?;
    let mut manifest = RunManifest::start("export", "");
    let (mut written, mut warnings) = (Vec::new(), Vec::new());
    for (name, group) in &groups {
        let (table, w) = aggregate(group)?;
        warnings.extend(w);
        let file = format!("{name}.csv");
        write_table(&out.join(&file), &table)?;
        manifest.add(out, &file)?;
        written.push(out.join(file));
    }
    manifest.finish(out)?;
    Ok((written, warnings))
}
