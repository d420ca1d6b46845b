//! The whole command pipeline on a toy budget in a temporary directory:
//! demonstrations, pretraining, two seeds of fine-tuning and the exported
//! cross-seed table.
//!
//! `cargo run --release --example harness_pipeline`

use skill_critic::harness::{cmd_demo_gen, cmd_export, cmd_pretrain, cmd_train, RunConfig};

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let base = [
        ("experiment", "toy"),
        ("demo.count", "80"),
        ("pretrain.epochs", "3"),
        ("pretrain.steps_per_epoch", "40"),
        ("train.mode", "skill-critic"),
        ("train.total_steps", "4000"),
        ("train.hl_warmup_steps", "2000"),
        ("train.prefill_steps", "500"),
        ("train.log_interval", "500"),
        ("train.eval_interval", "2000"),
        ("train.eval_episodes", "2"),
    ];
    let config = |seed: u64, sub: &str| -> anyhow::Result<RunConfig> {
        let mut cfg = RunConfig::from_assignments(&base)?;
        cfg.seed = seed;
        cfg.out = dir.path().join(sub);
        Ok(cfg)
    };

    let stage1 = config(0, "stage1")?;
    let demos = cmd_demo_gen(&stage1)?;
    println!("demonstrations: {}", demos.display());
    let model = cmd_pretrain(&stage1, &demos, false)?;
    println!("skill model:    {}", model.display());

    let mut metrics = Vec::new();
    for seed in 0..2 {
        let outcome = cmd_train(&config(seed, &format!("seed{seed}"))?, Some(&model), false)?;
        println!("seed {seed}: {} steps, final evaluation {:.2}", outcome.env_steps, outcome.final_eval);
        metrics.push(outcome.metrics);
    }

    let (tables, warnings) = cmd_export(&metrics, &dir.path().join("export"))?;
    for w in warnings {
        println!("warning: {w}");
    }
    for t in tables {
        println!("\n{}:\n{}", t.display(), std::fs::read_to_string(&t)?);
    }
    Ok(())
}
