//! Finite-difference check of backpropagated gradients on randomly drawn
//! networks and losses.
//!
//! `cargo run --release --example gradient_check -- [cases] [seed]`

use std::time::Instant;

use skill_critic::numgrad::run_gradient_suite;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let cases: usize = args.next().map_or(Ok(100), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let start = Instant::now();
    let reports = run_gradient_suite(cases, seed)?;
    for (i, r) in reports.iter().enumerate() {
        println!(
            "case {i:>3}  {:<34} hidden {:<14} bn {:<5} batch {}  params {:>4} (skipped {})  max rel error {:.2e}",
            format!("{:?}", r.case.loss),
            format!("{:?}", r.case.spec.hidden),
            r.case.spec.batch_norm,
            r.case.batch,
            r.checked,
            r.skipped,
            r.max_rel_error
        );
    }
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    let checked: usize = reports.iter().map(|r| r.checked).sum();
    let skipped: usize = reports.iter().map(|r| r.skipped).sum();
    println!("{cases} cases, {checked} parameters compared, {skipped} skipped at kinks");
    println!("worst relative error {worst:.2e} in {:.2?}", start.elapsed());
    Ok(())
}
