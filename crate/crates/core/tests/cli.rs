//! Exit statuses and artifacts of the `skillcritic` binary.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skillcritic")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn verify_exit_statuses() {
    let ok = run(&["verify", "--instances", "5"]);
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("result: PASS"));
    let bad = run(&["verify", "--instances", "5", "--mutate-beta"]);
    assert_eq!(code(&bad), 3);
    assert!(stderr(&bad).contains("verification failed"));
}

#[test]
fn validation_errors_exit_with_one() {
    for args in [
        &["config", "--override", "train.gamma=2"][..],
        &["config", "--override", "no.such.key=1"],
        &["config", "--override", "missing-equals"],
        &["config", "--mode", "greedy"],
        &["config", "--config", "/nonexistent/run.config"],
        &["train", "--mode", "skill-critic", "--out", "/tmp/unused"],
    ] {
        let o = run(args);
        assert_eq!(code(&o), 1, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn config_layers_file_flags_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.config");
    std::fs::write(&file, "# comment\nseed = 4\ntrain.delta_a = 20\ntrain.mode = spirl\n").unwrap();
    let o = run(&["config", "--config", file.to_str().unwrap(), "--seed", "9", "--override", "train.delta_a=30"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    for line in ["seed = 9", "train.delta_a = 30", "train.mode = spirl"] {
        assert!(text.lines().any(|l| l == line), "missing {line:?} in\n{text}");
    }
}

#[test]
fn demo_gen_pretrain_train_and_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let common = [
        "--out", out,
        "--override", "demo.count=30",
        "--override", "pretrain.epochs=1",
        "--override", "pretrain.steps_per_epoch=10",
        "--override", "train.total_steps=600",
        "--override", "train.hl_warmup_steps=300",
        "--override", "train.prefill_steps=200",
        "--override", "train.log_interval=300",
        "--override", "train.eval_episodes=1",
    ];
    let step = |cmd: &[&str]| {
        let o = run(&[cmd, &common[..]].concat());
        assert_eq!(code(&o), 0, "{cmd:?}: {}", stderr(&o));
    };
    step(&["demo-gen"]);
    step(&["pretrain"]);
    let model = dir.path().join("skill_model.sca");
    step(&["train", "--skill", model.to_str().unwrap()]);
    for f in ["demos.txt", "demo-gen.manifest", "pretrain.manifest", "metrics.csv", "train.manifest", "train.config"] {
        assert!(Path::new(out).join(f).is_file(), "{f}");
    }
    let metrics = dir.path().join("metrics.csv");
    step(&["export", metrics.to_str().unwrap()]);
    assert!(dir.path().join("default.csv").is_file());

    // Garbage where a dataset should be is a runtime failure.
    let junk = dir.path().join("junk.txt");
    std::fs::write(&junk, "not a dataset").unwrap();
    let o = run(&[&["pretrain", "--dataset", junk.to_str().unwrap()], &common[..]].concat());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
