//! Command-line front end for the experiment harness.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skill_critic::harness::{
    cmd_demo_gen, cmd_export, cmd_pretrain, cmd_train, cmd_verify, parse_assignment, parse_text, HarnessError, RunConfig,
    VerifyOptions,
};

#[derive(Parser)]
#[command(name = "skillcritic", version, about = "Skill-prior hierarchical RL: data, pretraining, training, checks, export")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// File of `key = value` lines; see `skillcritic config` for every key.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// skill-critic, spirl, independent-q, uniform-ll-prior or flat-sac.
    #[arg(long, global = true, value_name = "NAME")]
    mode: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// `key=value`, applied last; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate planner demonstrations into the output directory.
    DemoGen,
    /// Fit the skill model on a demonstration file.
    Pretrain {
        /// Defaults to `demos.txt` in the output directory.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Fine-tune on a downstream environment.
    Train {
        /// Skill model checkpoint; required by every hierarchical mode.
        #[arg(long)]
        skill: Option<PathBuf>,
        #[arg(long)]
        resume: bool,
    },
    /// Check the value-function identities on random tabular problems.
    Verify {
        #[arg(long, default_value_t = 50)]
        instances: usize,
        /// Corrupt the termination rule; the checks must then fail.
        #[arg(long, hide = true)]
        mutate_beta: bool,
    },
    /// Aggregate metrics files across seeds, one table per experiment.
    Export {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Print the resolved configuration with every key documented.
    Config,
}

fn resolve(c: &Common) -> anyhow::Result<RunConfig> {
    let mut assignments = Vec::new();
    if let Some(path) = &c.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        assignments.extend(parse_text(&text)?);
    }
    if let Some(seed) = c.seed {
        assignments.push(("seed".into(), seed.to_string()));
    }
    if let Some(mode) = &c.mode {
        assignments.push(("train.mode".into(), mode.clone()));
    }
    if let Some(out) = &c.out {
        assignments.push(("out".into(), out.display().to_string()));
    }
    for o in &c.overrides {
        assignments.push(parse_assignment(o)?);
    }
    Ok(RunConfig::from_assignments(&assignments)?)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Verify { instances, mutate_beta } = cli.command {
        let report = cmd_verify(&VerifyOptions { instances, seed: cli.common.seed.unwrap_or(0), mutate_beta })?;
        print!("{}", report.render());
        return Ok(());
    }
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::DemoGen => println!("wrote {}", cmd_demo_gen(&cfg)?.display()),
        Command::Pretrain { dataset, resume } => {
            let dataset = dataset.unwrap_or_else(|| cfg.out.join("demos.txt"));
            println!("wrote {}", cmd_pretrain(&cfg, &dataset, resume)?.display());
        }
        Command::Train { skill, resume } => {
            let o = cmd_train(&cfg, skill.as_deref(), resume)?;
            println!("{} steps, final evaluation {:.3}, metrics in {}", o.env_steps, o.final_eval, o.metrics.display());
        }
        Command::Export { inputs } => {
            let (written, warnings) = cmd_export(&inputs, &cfg.out)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            for p in written {
                println!("wrote {}", p.display());
            }
        }
        Command::Config => {
            cfg.validate()?;
            print!("{}", cfg.to_documented_text());
        }
        Command::Verify { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<HarnessError>().map_or(2, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
