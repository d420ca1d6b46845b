//! Networks shared by both levels and by flat SAC.

use rand::Rng;

use super::HrlError;
use crate::numgrad::{adam_step, Activation, Adam, DiagGaussian, GaussianVar, Graph, Mlp, MlpSpec, Tensor, Var, LOG_STD_MAX, LOG_STD_MIN};

/// Two Q-networks with Polyak-averaged target copies.
#[derive(Clone, Debug)]
pub struct TwinCritic {
    pub q: [Mlp; 2],
    pub target: [Mlp; 2],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticStats {
    pub loss: f64,
    pub q_mean: f64,
}

impl TwinCritic {
    pub fn new<R: Rng + ?Sized>(input: usize, hidden: &[usize], rng: &mut R) -> Result<Self, HrlError> {
        let spec = MlpSpec::new(input, hidden, 1, Activation::LeakyRelu);
        let q = [Mlp::new(spec.clone(), rng)?, Mlp::new(spec, rng)?];
        Ok(Self { target: q.clone(), q })
    }

    pub fn input_dim(&self) -> usize {
        self.q[0].spec().input
    }

    /// Row-wise `min(Q̄₁, Q̄₂)` of the target networks.
    pub fn target_min(&self, x: &Tensor) -> Result<Vec<f64>, HrlError> {
        let a = self.target[0].infer(x)?;
        let b = self.target[1].infer(x)?;
        Ok(a.data().iter().zip(b.data()).map(|(x, y)| x.min(*y)).collect())
    }

    /// Row-wise `min(Q₁, Q₂)` recorded on `g`; the critics receive no update.
    pub fn min_q_on(&self, g: &mut Graph, x: Var) -> Result<Var, HrlError> {
        let b0 = self.q[0].bind(g);
        let q0 = self.q[0].forward(g, &b0, x)?;
        let b1 = self.q[1].bind(g);
        let q1 = self.q[1].forward(g, &b1, x)?;
        Ok(g.minimum(q0, q1))
    }

    /// One Adam step on `Σ_i mean((Q_i(x) − y)²)`.
    pub fn regress(&mut self, x: &Tensor, y: &[f64], adam: &Adam) -> Result<CriticStats, HrlError> {
        let n = x.rows();
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let yv = g.constant(Tensor::from_raw(n, 1, y.to_vec()));
        let mut bounds = Vec::with_capacity(2);
        let mut terms = Vec::with_capacity(2);
        let mut q_mean = 0.0;
        for (i, net) in self.q.iter().enumerate() {
            let b = net.bind(&mut g);
            let q = net.forward(&mut g, &b, xv)?;
            if i == 0 {
                q_mean = g.value(q).sum() / n as f64;
            }
            let d = g.sub(q, yv);
            let d2 = g.square(d);
            terms.push(g.mean(d2));
            bounds.push(b);
        }
        let loss = g.add(terms[0], terms[1]);
        let loss_value = g.value(loss).item();
        if !loss_value.is_finite() {
            return Err(HrlError::NonFinite(format!("critic loss {loss_value}")));
        }
        let grads = g.backward(loss)?;
        for (net, b) in self.q.iter_mut().zip(&bounds) {
            net.params.zero_grad();
            net.params.accumulate(&grads, b);
            adam_step(&mut net.params, adam)?;
        }
        Ok(CriticStats { loss: loss_value, q_mean })
    }

    pub fn soft_update(&mut self, tau: f64) {
        for (q, t) in self.q.iter().zip(self.target.iter_mut()) {
            q.params.soft_update_into(&mut t.params, tau);
        }
    }
}

/// Diagonal-Gaussian policy head: the network emits `[mean, log σ]`; the
/// effective standard deviation is `exp(clamp(log σ)) + std_floor`.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub dim: usize,
    pub std_floor: Option<Vec<f64>>,
}

impl GaussianPolicy {
    pub fn input_dim(&self) -> usize {
        self.net.spec().input
    }

    /// Distribution on `g` for inputs `x` (params bound by the caller).
    pub fn dist_on(&self, g: &mut Graph, bound: &crate::numgrad::Bound, x: Var) -> Result<GaussianVar, HrlError> {
        let head = self.net.forward(g, bound, x)?;
        let mut d = GaussianVar::from_head(g, head, self.dim);
        if let Some(floor) = &self.std_floor {
            let f = g.constant(Tensor::row(floor));
            d.std = g.add_row(d.std, f);
        }
        Ok(d)
    }

    /// Per-row `(mean, std)` without gradients.
    pub fn dists(&self, x: &Tensor) -> Result<Vec<DiagGaussian>, HrlError> {
        let head = self.net.infer(x)?;
        let d = self.dim;
        Ok((0..head.rows())
            .map(|i| {
                let row = head.row_slice(i);
                let log_std = row[d..2 * d]
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        let s = l.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
                        let floor = self.std_floor.as_ref().map_or(0.0, |f| f[j]);
                        (s + floor).ln()
                    })
                    .collect();
                DiagGaussian { mean: row[..d].to_vec(), log_std }
            })
            .collect())
    }

    pub fn dist(&self, x: &[f64]) -> Result<DiagGaussian, HrlError> {
        Ok(self.dists(&Tensor::row(x))?.remove(0))
    }
}

/// Row-major concatenation of per-row feature vectors.
pub(crate) fn stack(rows: &[Vec<f64>]) -> Tensor {
    let n = rows.len();
    let c = rows.first().map_or(0, |r| r.len());
    let mut data = Vec::with_capacity(n * c);
    for r in rows {
        debug_assert_eq!(r.len(), c);
        data.extend_from_slice(r);
    }
    Tensor::from_raw(n, c, data)
}

/// `[a_i ⊕ b_i]` row by row.
pub(crate) fn join_rows(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.iter().chain(y).copied().collect()).collect()
}

pub(crate) fn adam(lr: f64, beta2: f64) -> Adam {
    Adam { learning_rate: lr, beta1: 0.9, beta2, epsilon: 1e-8 }
}

/// Log-density of `tanh(pre)` under a Gaussian over `pre`.
pub(crate) fn squashed_log_prob(d: &DiagGaussian, pre: &[f64]) -> f64 {
    let corr: f64 = pre.iter().map(|p| (1.0 - p.tanh().powi(2) + 1e-6).ln()).sum();
    d.log_prob(pre) - corr
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn critic_regression_fits_constant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut c = TwinCritic::new(3, &[16], &mut rng).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3], vec![-0.5, 0.0, 0.9]]).unwrap();
        let y = [1.5, 1.5];
        let first = c.regress(&x, &y, &adam(1e-2, 0.99)).unwrap().loss;
        let mut last = first;
        for _ in 0..300 {
            last = c.regress(&x, &y, &adam(1e-2, 0.99)).unwrap().loss;
        }
        assert!(last < 1e-3 * first.max(1.0), "{first} -> {last}");
        let before = c.target[0].params.checksum();
        c.soft_update(0.5);
        assert_ne!(before, c.target[0].params.checksum());
    }

    #[test]
    fn policy_floor_matches_graph_and_plain_paths() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(MlpSpec::new(3, &[8], 4, Activation::LeakyRelu), &mut rng).unwrap();
        let p = GaussianPolicy { net, dim: 2, std_floor: Some(vec![0.05, 0.1]) };
        let x = Tensor::from_rows(&[vec![0.3, -0.1, 0.7]]).unwrap();
        let plain = p.dists(&x).unwrap().remove(0);
        let mut g = Graph::new();
        let b = p.net.bind(&mut g);
        let xv = g.constant(x);
        let d = p.dist_on(&mut g, &b, xv).unwrap();
        for j in 0..2 {
            assert!((g.value(d.mean).data()[j] - plain.mean[j]).abs() < 1e-15);
            assert!((g.value(d.std).data()[j] - plain.log_std[j].exp()).abs() < 1e-12);
        }
    }
}
