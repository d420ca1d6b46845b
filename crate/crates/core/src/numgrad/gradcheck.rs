//! Finite-difference checks of reverse-mode gradients on randomly drawn
//! networks and losses.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, GaussianVar, Graph, Mlp, MlpSpec, NumError, Tensor, Var};
use crate::rng::normal_vec;

/// Scalar objective placed on top of the network output.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    /// Mean squared error against a fixed target.
    Mse,
    /// Negative Gaussian log-likelihood of a fixed target; the head holds
    /// mean and log-std.
    GaussianNll,
    /// KL between the head's Gaussian and a fixed one, in either direction.
    GaussianKl { head_first: bool },
    /// Reparameterized tanh-squashed sample scored by a linear critic plus
    /// its log-density, as in a soft actor-critic policy loss.
    SquashedSample,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Mse,
        LossKind::GaussianNll,
        LossKind::GaussianKl { head_first: true },
        LossKind::GaussianKl { head_first: false },
        LossKind::SquashedSample,
    ];

    /// Network output width for a `dim`-dimensional loss.
    fn head_width(self, dim: usize) -> usize {
        match self {
            LossKind::Mse => dim,
            _ => 2 * dim,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckCase {
    pub spec: MlpSpec,
    pub loss: LossKind,
    pub batch: usize,
    /// Batch-statistics forward pass; only meaningful with batch norm.
    pub train_mode: bool,
    /// Seeds the weights, inputs and loss constants.
    pub seed: u64,
}

impl GradCheckCase {
    /// Draws a network of depth 1–4 with widths up to 12, mixed activations,
    /// optional batch norm, and one of the [`LossKind`]s.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let acts = [Activation::Linear, Activation::LeakyRelu, Activation::Tanh];
        let loss = *LossKind::ALL.choose(rng).expect("non-empty");
        let dim = rng.gen_range(1..=3);
        let hidden: Vec<usize> = (0..rng.gen_range(0..=3)).map(|_| rng.gen_range(2..=12)).collect();
        let mut activations: Vec<Activation> = hidden.iter().map(|_| *acts.choose(rng).expect("non-empty")).collect();
        activations.push(Activation::Linear);
        let batch_norm = !hidden.is_empty() && rng.gen_bool(0.3);
        let spec = MlpSpec { input: rng.gen_range(1..=6), hidden, output: loss.head_width(dim), activations, batch_norm };
        Self { spec, loss, batch: rng.gen_range(2..=8), train_mode: batch_norm && rng.gen_bool(0.7), seed: rng.gen() }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub case: GradCheckCase,
    /// Largest `|analytic − numeric| / max(|analytic|, |numeric|, floor)`.
    pub max_rel_error: f64,
    /// Number of scalar parameters compared.
    pub checked: usize,
    /// Parameters left out because a kink of the loss lies within the
    /// difference stencil.
    pub skipped: usize,
}

/// Step of the five-point central difference. Its truncation error is
/// fourth order, so the step can be large enough to keep rounding in the
/// loss from dominating.
const EPS: f64 = 1e-4;
/// Relative disagreement between the estimates at `EPS` and `EPS / 2` above
/// which the stencil is taken to straddle a kink (a leaky-ReLU switching
/// sides). A wrong analytic gradient leaves the two estimates in agreement,
/// so this never hides one.
const KINK_TOL: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely, since the
/// difference quotient's rounding error is not relative to them.
const REL_FLOOR: f64 = 1e-3;

struct Fixture {
    x: Tensor,
    target: Tensor,
    other: (Tensor, Tensor),
    noise: Tensor,
    critic: Tensor,
}

fn loss_on(case: &GradCheckCase, net: &mut Mlp, fx: &Fixture, g: &mut Graph) -> Result<(Var, super::Bound), NumError> {
    let bound = net.bind(g);
    let x = g.constant(fx.x.clone());
    let out = if case.train_mode { net.forward_train(g, &bound, x)? } else { net.forward(g, &bound, x)? };
    let dim = fx.target.cols();
    let per_row = match case.loss {
        LossKind::Mse => {
            let y = g.constant(fx.target.clone());
            let d = g.sub(out, y);
            let d2 = g.square(d);
            g.row_sum(d2)
        }
        LossKind::GaussianNll => {
            let p = GaussianVar::from_head(g, out, dim);
            let y = g.constant(fx.target.clone());
            let lp = p.log_prob(g, y);
            g.neg(lp)
        }
        LossKind::GaussianKl { head_first } => {
            let p = GaussianVar::from_head(g, out, dim);
            let mean = g.constant(fx.other.0.clone());
            let std = g.constant(fx.other.1.clone());
            let q = GaussianVar { mean, std };
            if head_first {
                p.kl(g, &q)
            } else {
                q.kl(g, &p)
            }
        }
        LossKind::SquashedSample => {
            let p = GaussianVar::from_head(g, out, dim);
            let noise = g.constant(fx.noise.clone());
            let pre = p.rsample(g, noise);
            let a = g.tanh(pre);
            let lp = p.squashed_log_prob(g, pre, a);
            let w = g.constant(fx.critic.clone());
            let q = g.mul_row(a, w);
            let q = g.row_sum(q);
            let lp = g.scale(lp, 0.2);
            g.sub(lp, q)
        }
    };
    Ok((g.mean(per_row), bound))
}

fn eval(case: &GradCheckCase, net: &Mlp, fx: &Fixture) -> Result<f64, NumError> {
    let mut net = net.clone();
    let mut g = Graph::new();
    let (l, _) = loss_on(case, &mut net, fx, &mut g)?;
    Ok(g.value(l).item())
}

/// Compares every trainable scalar's backpropagated gradient against a
/// five-point central difference, skipping scalars whose stencil crosses a
/// kink.
pub fn check_case(case: &GradCheckCase) -> Result<GradCheckReport, NumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(case.seed);
    let mut net = Mlp::new(case.spec.clone(), &mut rng)?;
    // Move batch-norm affine terms and running statistics off their
    // initial values so that every path is exercised.
    for p in net.params.iter_mut().filter(|p| p.name.starts_with("bn")) {
        let shift = if p.name.ends_with("var") || p.name.ends_with("gamma") { 1.0 } else { 0.0 };
        for v in p.value.data_mut() {
            *v = shift + rng.gen_range(-0.5..0.5);
        }
    }
    let n = case.batch;
    let dim = match case.loss {
        LossKind::Mse => case.spec.output,
        _ => case.spec.output / 2,
    };
    let mat = |rng: &mut ChaCha8Rng, r: usize, c: usize| Tensor::from_raw(r, c, normal_vec(rng, r * c));
    let fx = Fixture {
        x: mat(&mut rng, n, case.spec.input),
        target: mat(&mut rng, n, dim),
        other: (mat(&mut rng, n, dim), Tensor::from_raw(n, dim, (0..n * dim).map(|_| rng.gen_range(0.3..2.0)).collect())),
        noise: mat(&mut rng, n, dim),
        critic: Tensor::row(&normal_vec(&mut rng, dim)),
    };

    let mut g = Graph::new();
    let mut probe = net.clone();
    let (l, bound) = loss_on(case, &mut probe, &fx, &mut g)?;
    let grads = g.backward(l)?;

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut skipped = 0;
    let trainable: Vec<usize> = net.params.iter().enumerate().filter(|(_, p)| p.trainable).map(|(i, _)| i).collect();
    for i in trainable {
        let analytic = grads.get(bound.var(i)).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; net.params.value(i).len()]);
        for (j, &a) in analytic.iter().enumerate() {
            let x0 = net.params.value(i).data()[j];
            let mut at = |h: f64| -> Result<f64, NumError> {
                net.params.value_mut(i).data_mut()[j] = x0 + h;
                eval(case, &net, &fx)
            };
            let mut stencil = |h: f64| -> Result<f64, NumError> {
                let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
                Ok((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
            };
            let (coarse, fine) = (stencil(EPS)?, stencil(0.5 * EPS)?);
            net.params.value_mut(i).data_mut()[j] = x0;
            let rel = |x: f64, y: f64| (x - y).abs() / x.abs().max(y.abs()).max(REL_FLOOR);
            if rel(coarse, fine) > KINK_TOL {
                skipped += 1;
                continue;
            }
            worst = worst.max(rel(a, fine));
            checked += 1;
        }
    }
    Ok(GradCheckReport { case: case.clone(), max_rel_error: worst, checked, skipped })
}

/// Draws and checks `count` cases from one seed.
pub fn run_gradient_suite(count: usize, seed: u64) -> Result<Vec<GradCheckReport>, NumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| check_case(&GradCheckCase::random(&mut rng))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_loss_kind_passes_on_a_small_net() {
        for (k, loss) in LossKind::ALL.into_iter().enumerate() {
            let mut spec = MlpSpec::new(3, &[5, 4], loss.head_width(2), Activation::Tanh).with_batch_norm(k % 2 == 0);
            spec.activations[1] = Activation::LeakyRelu;
            let case = GradCheckCase { spec, loss, batch: 4, train_mode: k % 2 == 0, seed: 40 + k as u64 };
            let r = check_case(&case).unwrap();
            assert!(r.checked > 40 && r.skipped * 20 <= r.checked);
            assert!(r.max_rel_error <= 1e-4, "{loss:?}: {}", r.max_rel_error);
        }
    }

    #[test]
    fn suite_is_reproducible_and_covers_every_loss() {
        let a = run_gradient_suite(25, 9).unwrap();
        let b = run_gradient_suite(25, 9).unwrap();
        let errs = |r: &[GradCheckReport]| r.iter().map(|x| x.max_rel_error).collect::<Vec<_>>();
        assert_eq!(errs(&a), errs(&b));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let kinds: Vec<LossKind> = (0..200).map(|_| GradCheckCase::random(&mut rng).loss).collect();
        assert!(LossKind::ALL.iter().all(|k| kinds.contains(k)));
    }
}
