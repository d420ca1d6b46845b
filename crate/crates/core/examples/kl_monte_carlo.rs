//! Closed-form diagonal-Gaussian KL against a Monte Carlo estimate.
//!
//! `cargo run --release --example kl_monte_carlo -- [dim] [samples] [seed]`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use skill_critic::numgrad::{gaussian_kl, DiagGaussian};
use skill_critic::rng::normal_vec;

fn random_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> anyhow::Result<DiagGaussian> {
    let mean = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let log_std = (0..dim).map(|_| rng.gen_range(-0.5..0.5)).collect();
    Ok(DiagGaussian::new(mean, log_std)?)
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let dim: usize = args.next().map_or(Ok(10), |s| s.parse())?;
    let samples: usize = args.next().map_or(Ok(1_000_000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(0), |s| s.parse())?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_gaussian(&mut rng, dim)?;
    let q = random_gaussian(&mut rng, dim)?;
    let exact = gaussian_kl(&p, &q)?;

    let std = p.std();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let x: Vec<f64> = normal_vec(&mut rng, dim).iter().zip(&p.mean).zip(&std).map(|((e, m), s)| m + s * e).collect();
        let d = p.log_prob(&x) - q.log_prob(&x);
        sum += d;
        sum_sq += d * d;
    }
    let n = samples as f64;
    let mean = sum / n;
    let se = ((sum_sq / n - mean * mean) / (n - 1.0)).sqrt();
    println!("closed form  {exact:.6}");
    println!("monte carlo  {mean:.6} ± {se:.6} (standard error, {samples} samples)");
    println!("difference   {:.2} standard errors", (exact - mean) / se);
    println!("KL(p, p)     {}", gaussian_kl(&p, &p)?);
    Ok(())
}
