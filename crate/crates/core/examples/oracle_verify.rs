//! Checks the hierarchical value identities on random tabular problems,
//! then repeats the suite with a corrupted termination rule to show that it
//! notices.
//!
//! `cargo run --release --example oracle_verify -- [instances] [seed]`

use skill_critic::oracle::{run_verification, SuiteConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let instances: usize = args.next().map_or(Ok(50), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let cfg = SuiteConfig { instances, seed, ..SuiteConfig::default() };
    print!("{}", run_verification(&cfg)?.render());

    println!("\nwith the termination rule corrupted:");
    let broken = run_verification(&SuiteConfig { mutate_beta: true, ..cfg })?;
    for (name, dev, status) in broken.summary() {
        println!("  {name:<26} max deviation {dev:>10.3e}  {status}");
    }
    println!("result: {}", if broken.passed() { "PASS (unexpected)" } else { "FAIL, as it should" });
    Ok(())
}
