//! Flat soft actor-critic on the dense point-mass reach task, reported as a
//! fraction of the analytic optimum over the evaluation starts.
//!
//! `cargo run --release --example flat_sac_reach -- [seed] [steps]`

use skill_critic::env::ReachEnv;
use skill_critic::hrl::{TrainConfig, Trainer};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;
    let steps: usize = args.next().map_or(Ok(50_000), |s| s.parse())?;

    let env = ReachEnv::default();
    let mut cfg = TrainConfig::flat_sac();
    cfg.total_steps = steps;
    cfg.eval_episodes = 10;
    let optimum = (0..cfg.eval_episodes)
        .map(|i| {
            let (p, g) = ReachEnv::eval_start(i);
            env.optimal_return(p, g)
        })
        .sum::<f64>()
        / cfg.eval_episodes as f64;

    let start = std::time::Instant::now();
    let mut trainer = Trainer::new(cfg, env, None, seed)?;
    trainer.run(|row| {
        if row.env_steps % 5_000 == 0 {
            println!(
                "steps {:>6}  train {:7.2}  eval {:7.2} ({:5.1}% of optimum)  alpha {:.4}  log_pi {:6.2}",
                row.env_steps,
                row.episode_reward_mean,
                row.eval_reward,
                100.0 * row.eval_reward / optimum,
                row.alpha_a,
                row.kl_ll
            );
        }
    })?;
    let final_eval = trainer.evaluate()?;
    println!(
        "final eval {final_eval:.2} of optimum {optimum:.2} = {:.1}% in {:.1}s",
        100.0 * final_eval / optimum,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
