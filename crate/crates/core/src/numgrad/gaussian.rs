//! Diagonal Gaussians, both as plain values and as graph expressions.

use super::graph::{Graph, Var};
use super::NumError;

pub const LOG_STD_MIN: f64 = -10.0;
pub const LOG_STD_MAX: f64 = 2.0;
const LN_2PI: f64 = 1.8378770664093453;

#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_std: Vec<f64>) -> Result<Self, NumError> {
        if mean.len() != log_std.len() {
            return Err(NumError::DimensionMismatch {
                expected: mean.len(),
                got: log_std.len(),
            });
        }
        Ok(Self { mean, log_std })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            log_std: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, x: &[f64]) -> f64 {
        self.mean
            .iter()
            .zip(&self.log_std)
            .zip(x)
            .map(|((m, l), x)| {
                let z = (x - m) / l.exp();
                -0.5 * z * z - l - 0.5 * LN_2PI
            })
            .sum()
    }
}

/// Closed-form `KL(p ‖ q)` summed over dimensions.
pub fn gaussian_kl(p: &DiagGaussian, q: &DiagGaussian) -> Result<f64, NumError> {
    if p.dim() != q.dim() {
        return Err(NumError::DimensionMismatch {
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let mut kl = 0.0;
    for i in 0..p.dim() {
        let d = p.mean[i] - q.mean[i];
        let vp = (2.0 * p.log_std[i]).exp();
        let vq = (2.0 * q.log_std[i]).exp();
        kl += (q.log_std[i] - p.log_std[i]) + (vp + d * d) / (2.0 * vq) - 0.5;
    }
    Ok(kl.max(0.0))
}

/// Reparameterized sample `mean + std ⊙ noise`.
pub fn rsample(dist: &DiagGaussian, noise: &[f64]) -> Result<Vec<f64>, NumError> {
    if noise.len() != dist.dim() {
        return Err(NumError::DimensionMismatch {
            expected: dist.dim(),
            got: noise.len(),
        });
    }
    Ok(dist
        .mean
        .iter()
        .zip(&dist.log_std)
        .zip(noise)
        .map(|((m, l), e)| m + l.exp() * e)
        .collect())
}

/// Componentwise `tanh`, mapping pre-squash actions into `[-1, 1]`.
pub fn squash(pre_action: &[f64]) -> Vec<f64> {
    pre_action.iter().map(|x| x.tanh()).collect()
}

/// Gaussian parameterized on a graph by mean and standard deviation, each `[n, d]`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVar {
    pub mean: Var,
    pub std: Var,
}

impl GaussianVar {
    /// Splits a head output `[n, 2d]` into mean and clamped log-std.
    pub fn from_head(g: &mut Graph, head: Var, dim: usize) -> Self {
        let mean = g.slice_cols(head, 0, dim);
        let log_std = g.slice_cols(head, dim, 2 * dim);
        let log_std = g.clamp(log_std, LOG_STD_MIN, LOG_STD_MAX);
        let std = g.exp(log_std);
        Self { mean, std }
    }

    /// Reparameterized sample given constant standard-normal `noise` `[n, d]`.
    pub fn rsample(&self, g: &mut Graph, noise: Var) -> Var {
        let scaled = g.mul(self.std, noise);
        g.add(self.mean, scaled)
    }

    /// Per-row `KL(self ‖ other)`, shape `[n, 1]`.
    pub fn kl(&self, g: &mut Graph, other: &GaussianVar) -> Var {
        let ls_p = g.log(self.std);
        let ls_q = g.log(other.std);
        let log_ratio = g.sub(ls_q, ls_p);
        let vp = g.square(self.std);
        let d = g.sub(self.mean, other.mean);
        let d2 = g.square(d);
        let num = g.add(vp, d2);
        let vq = g.square(other.std);
        let den = g.scale(vq, 2.0);
        let frac = g.div(num, den);
        let s = g.add(log_ratio, frac);
        let s = g.offset(s, -0.5);
        g.row_sum(s)
    }

    /// Per-row Gaussian log-density of `x`, shape `[n, 1]`.
    pub fn log_prob(&self, g: &mut Graph, x: Var) -> Var {
        let d = g.sub(x, self.mean);
        let z = g.div(d, self.std);
        let z2 = g.square(z);
        let z2 = g.scale(z2, -0.5);
        let ls = g.log(self.std);
        let t = g.sub(z2, ls);
        let t = g.offset(t, -0.5 * LN_2PI);
        g.row_sum(t)
    }

    /// Per-row log-density of `tanh(pre)` where `pre ~ self`, shape `[n, 1]`.
    pub fn squashed_log_prob(&self, g: &mut Graph, pre: Var, squashed: Var) -> Var {
        let lp = self.log_prob(g, pre);
        let sq = g.square(squashed);
        let one_minus = g.scale(sq, -1.0);
        let one_minus = g.offset(one_minus, 1.0 + 1e-6);
        let logs = g.log(one_minus);
        let corr = g.row_sum(logs);
        g.sub(lp, corr)
    }
}
