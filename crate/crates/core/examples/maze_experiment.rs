//! One Stage-2 run on a downstream maze, with the Stage-1 skill model
//! cached on disk by configuration so that repeated runs skip pretraining.
//!
//! `cargo run --release --example maze_experiment -- [key=value ...]`
//!
//! Keys are those of the run configuration, e.g.
//! `env=curvy_tunnel train.mode=spirl seed=2 train.total_steps=60000`.

use std::path::PathBuf;
use std::time::Instant;

use sha2::{Digest, Sha256};
use skill_critic::harness::{generate_dataset, make_trainer, parse_assignment, pretrain_config, RunConfig};
use skill_critic::skillspace::{Pretrainer, SkillModel};

fn main() -> anyhow::Result<()> {
    let assignments = std::env::args().skip(1).map(|a| parse_assignment(&a)).collect::<Result<Vec<_>, _>>()?;
    let cfg = RunConfig::from_assignments(&assignments)?;

    // Stage 1 depends only on the seed and the demo/planner/model/pretrain keys.
    let stage1: String = cfg
        .entries()
        .into_iter()
        .filter(|(k, _)| *k == "seed" || ["demo.", "planner.", "model.", "pretrain."].iter().any(|p| k.starts_with(p)))
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let cache = PathBuf::from("target/skill-cache");
    std::fs::create_dir_all(&cache)?;
    let path = cache.join(format!("{}.sca", &hex::encode(Sha256::digest(stage1.as_bytes()))[..16]));
    let model = if path.exists() {
        SkillModel::load(&path)?
    } else {
        let t0 = Instant::now();
        let data = generate_dataset(&cfg)?;
        let mut p = Pretrainer::new(pretrain_config(&cfg, &data), &data, cfg.seed)?;
        p.run(&data, |e| println!("pretrain epoch {:>3}  recon {:.5}  total {:.5}", e.epoch, e.mean.reconstruction, e.mean.total))?;
        p.model.save(&path)?;
        println!("pretrained in {:.1?}", t0.elapsed());
        p.model
    };

    let start = Instant::now();
    let hierarchical = cfg.train.mode.is_hierarchical();
    let mut trainer = make_trainer(&cfg, hierarchical.then_some(model))?;
    println!("{} on {} seed {}", cfg.train.mode, cfg.env, cfg.seed);
    trainer.run(|r| {
        println!(
            "{:>7} it {:>6} train {:7.2} eval {:7.2} kl_hl {:7.3} kl_ll {:8.3} a_z {:.2e} a_a {:.2e} q_hl {:7.2} q_ll {:7.2} wall {:>4} {:>5.0}s",
            r.env_steps,
            r.iteration,
            r.episode_reward_mean,
            r.eval_reward,
            r.kl_hl,
            r.kl_ll,
            r.alpha_z,
            r.alpha_a,
            r.q_hl_mean,
            r.q_ll_mean,
            r.wall_contact_steps,
            start.elapsed().as_secs_f64()
        )
    })?;
    println!("final eval {:.2} after {:.1}s", trainer.evaluate()?, start.elapsed().as_secs_f64());
    Ok(())
}
