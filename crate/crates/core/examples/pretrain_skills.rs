//! Generates planner demonstrations and fits the Stage-1 skill model.
//!
//! `cargo run --release --example pretrain_skills -- [demos] [epochs]`

use std::time::Instant;

use skill_critic::env::{generate_demonstrations, DemoDataset, PlannerConfig};
use skill_critic::rng::{stream, Stream};
use skill_critic::skillspace::{reconstruction_mse, PretrainConfig, Pretrainer, SkillModelConfig, WindowSampler};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let demos: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(400);
    let epochs: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(20);

    let planner = PlannerConfig::default();
    let t0 = Instant::now();
    let trajectories = generate_demonstrations(7, demos, &planner)?;
    let data = DemoDataset { planner, trajectories };
    let steps: usize = data.trajectories.iter().map(|t| t.len()).sum();
    println!("{demos} demonstrations, {steps} steps, generated in {:.2?}", t0.elapsed());

    let mut cfg = PretrainConfig::new(SkillModelConfig::new(4, 2));
    cfg.epochs = epochs;
    let mut trainer = Pretrainer::new(cfg, &data, 7)?;
    let t1 = Instant::now();
    trainer.run(&data, |e| {
        println!(
            "epoch {:>3}  recon {:.5}  latent_kl {:.3}  prior_kl {:.3}  total {:.5}",
            e.epoch, e.mean.reconstruction, e.mean.latent_kl, e.mean.prior_kl, e.mean.total
        )
    })?;
    println!("trained in {:.2?}", t1.elapsed());

    let sampler = WindowSampler::new(&data, trainer.model.horizon())?;
    let held = sampler.sample(&data, 500, &mut stream(99, Stream::Eval));
    let mse = reconstruction_mse(&trainer.model, &held)?;
    println!("reconstruction MSE per action dimension: {mse:?}");
    Ok(())
}
