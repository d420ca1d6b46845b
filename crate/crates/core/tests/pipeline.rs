//! The subcommands end to end on small budgets, through the library API.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use skill_critic::harness::{
    cmd_demo_gen, cmd_export, cmd_pretrain, cmd_train, cmd_verify, read_metrics, sha256_file, HarnessError, RunConfig,
    RunManifest, VerifyOptions,
};
use skill_critic::skillspace::{SkillModel, SkillModelConfig};

const SMALL: &[(&str, &str)] = &[
    ("demo.count", "40"),
    ("pretrain.epochs", "2"),
    ("pretrain.steps_per_epoch", "20"),
    ("pretrain.batch_size", "16"),
    ("train.total_steps", "1500"),
    ("train.hl_warmup_steps", "800"),
    ("train.prefill_steps", "300"),
    ("train.batch_size", "16"),
    ("train.log_interval", "500"),
    ("train.eval_interval", "1500"),
    ("train.eval_episodes", "1"),
    ("checkpoint_interval", "500"),
];

fn config(out: &Path, extra: &[(&str, &str)]) -> RunConfig {
    let mut a: Vec<(String, String)> = SMALL.iter().chain(extra).map(|(k, v)| (k.to_string(), v.to_string())).collect();
    a.push(("out".into(), out.display().to_string()));
    RunConfig::from_assignments(&a).unwrap()
}

fn digest(p: &Path) -> String {
    sha256_file(p).unwrap().0
}

/// Demonstrations and a skill model in `dir/stage1`.
fn stage1(dir: &Path) -> PathBuf {
    let cfg = config(&dir.join("stage1"), &[]);
    let demos = cmd_demo_gen(&cfg).unwrap();
    cmd_pretrain(&cfg, &demos, false).unwrap()
}

#[test]
fn demo_gen_is_reproducible_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let a = cmd_demo_gen(&config(&dir.path().join("a"), &[])).unwrap();
    let b = cmd_demo_gen(&config(&dir.path().join("b"), &[])).unwrap();
    let c = cmd_demo_gen(&config(&dir.path().join("c"), &[("seed", "1")])).unwrap();
    assert_eq!(digest(&a), digest(&b));
    assert_ne!(digest(&a), digest(&c));
    let manifest = RunManifest::load(&dir.path().join("a/demo-gen.manifest")).unwrap();
    manifest.verify(&dir.path().join("a")).unwrap();
    assert_eq!(manifest.digest_of(Path::new("demos.txt")), Some(digest(&a).as_str()));
}

#[test]
fn pretrain_resume_and_configuration_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("p");
    let cfg = config(&out, &[]);
    let demos = cmd_demo_gen(&cfg).unwrap();
    let model = cmd_pretrain(&cfg, &demos, false).unwrap();
    let first = digest(&model);

    // A finished checkpoint resumes to the same model without further epochs.
    cmd_pretrain(&cfg, &demos, true).unwrap();
    assert_eq!(digest(&model), first);
    let lines = fs::read_to_string(out.join("pretrain_metrics.csv")).unwrap();
    assert_eq!(lines.lines().count(), 1 + 2);

    // A fresh run with the same seed is bit-identical.
    let again = config(&dir.path().join("q"), &[]);
    assert_eq!(digest(&cmd_pretrain(&again, &demos, false).unwrap()), first);

    // A checkpoint from another configuration is refused.
    let other = config(&out, &[("pretrain.learning_rate", "0.002")]);
    assert!(matches!(cmd_pretrain(&other, &demos, true), Err(HarnessError::Config(_))));
    let missing = cmd_pretrain(&cfg, &dir.path().join("nope.txt"), false).unwrap_err();
    assert_eq!(missing.exit_code(), 1);
}

#[test]
fn train_validates_the_skill_model_then_runs() {
    let dir = tempfile::tempdir().unwrap();
    let model = stage1(dir.path());

    let cfg = config(&dir.path().join("t"), &[]);
    assert!(matches!(cmd_train(&cfg, None, false), Err(HarnessError::Config(_))));

    let wide = dir.path().join("wide.sca");
    SkillModel::new(SkillModelConfig::new(6, 2), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap().save(&wide).unwrap();
    let err = cmd_train(&cfg, Some(&wide), false).unwrap_err();
    assert!(matches!(err, HarnessError::Config(ref m) if m.contains("state/action")), "{err}");
    assert_eq!(err.exit_code(), 1);
    // Nothing was written before validation failed.
    assert!(!cfg.out.join("metrics.csv").exists());

    let outcome = cmd_train(&cfg, Some(&model), false).unwrap();
    assert_eq!(outcome.env_steps, 1500);
    let series = read_metrics(&outcome.metrics).unwrap();
    assert_eq!(series.env_steps, vec![500, 1000, 1500]);
    RunManifest::load(&cfg.out.join("train.manifest")).unwrap().verify(&cfg.out).unwrap();

    // A flat run needs no model.
    let flat = config(&dir.path().join("flat"), &[("train.mode", "flat-sac"), ("train.total_steps", "600"), ("train.prefill_steps", "200")]);
    assert_eq!(cmd_train(&flat, None, false).unwrap().env_steps, 600);
}

#[test]
fn resuming_a_finished_run_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let model = stage1(dir.path());
    let full = config(&dir.path().join("full"), &[]);
    let reference = cmd_train(&full, Some(&model), false).unwrap();

    let resumed = cmd_train(&full, Some(&model), true).unwrap();
    assert_eq!(resumed.final_eval, reference.final_eval);
    assert_eq!(resumed.env_steps, reference.env_steps);
    let rows = |p: &Path| fs::read_to_string(p).unwrap();
    assert_eq!(rows(&resumed.metrics), rows(&dir.path().join("full/metrics.csv")));
}

#[test]
fn verify_reports_and_fails_under_mutation() {
    let ok = cmd_verify(&VerifyOptions { instances: 10, ..VerifyOptions::default() }).unwrap();
    assert!(ok.passed());
    let err = cmd_verify(&VerifyOptions { instances: 10, mutate_beta: true, ..VerifyOptions::default() }).unwrap_err();
    assert!(matches!(err, HarnessError::Verification(ref m) if m.contains("violation")));
    assert_eq!(err.exit_code(), 3);
    assert_eq!(cmd_verify(&VerifyOptions { instances: 0, ..VerifyOptions::default() }).unwrap_err().exit_code(), 1);
}

#[test]
fn export_groups_by_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut inputs = Vec::new();
    for (name, seed, experiment) in [("a", "0", "x"), ("b", "1", "x"), ("c", "0", "y")] {
        let cfg = config(
            &dir.path().join(name),
            &[("train.mode", "flat-sac"), ("train.total_steps", "400"), ("train.prefill_steps", "200"), ("train.log_interval", "200"), ("seed", seed), ("experiment", experiment)],
        );
        inputs.push(cmd_train(&cfg, None, false).unwrap().metrics);
    }
    let out = dir.path().join("export");
    let (written, warnings) = cmd_export(&inputs, &out).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(written, vec![out.join("x.csv"), out.join("y.csv")]);
    let x = fs::read_to_string(&written[0]).unwrap();
    assert_eq!(x.lines().count(), 3);
    assert!(x.lines().skip(1).all(|l| l.ends_with(",2")));
    RunManifest::load(&out.join("export.manifest")).unwrap().verify(&out).unwrap();

    fs::write(dir.path().join("junk.csv"), "a,b\n1,2\n").unwrap();
    assert!(matches!(cmd_export(&[dir.path().join("junk.csv")], &out), Err(HarnessError::Config(_))));
    assert!(matches!(cmd_export(&[], &out), Err(HarnessError::Config(_))));
}
