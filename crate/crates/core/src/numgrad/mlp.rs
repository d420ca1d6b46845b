use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::graph::{Graph, Var, BN_EPS};
use super::params::{Bound, ParameterSet};
use super::tensor::Tensor;
use super::NumError;

pub const LEAKY_SLOPE: f64 = 0.01;
const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    LeakyRelu,
    Tanh,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::LeakyRelu => "leaky_relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Activation::Linear),
            "leaky_relu" => Some(Activation::LeakyRelu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    /// One entry per layer (hidden layers then output); the last must be linear.
    pub activations: Vec<Activation>,
    /// Batch normalization after every hidden linear map.
    pub batch_norm: bool,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation) -> Self {
        let mut activations = vec![activation; hidden.len()];
        activations.push(Activation::Linear);
        Self {
            input,
            hidden: hidden.to_vec(),
            output,
            activations,
            batch_norm: false,
        }
    }

    pub fn with_batch_norm(mut self, on: bool) -> Self {
        self.batch_norm = on;
        self
    }

    pub fn validate(&self) -> Result<(), NumError> {
        let bad = |why: &str| Err(NumError::InvalidSpec(why.to_string()));
        if self.input == 0 || self.output == 0 || self.hidden.iter().any(|&w| w == 0) {
            return bad("layer widths must be positive");
        }
        if self.activations.len() != self.hidden.len() + 1 {
            return bad("one activation per layer required");
        }
        if self.activations.last() != Some(&Activation::Linear) {
            return bad("final layer must be linear");
        }
        Ok(())
    }

    fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(&self.hidden);
        w.push(self.output);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }
}

#[derive(Clone, Debug)]
struct LayerIdx {
    w: usize,
    b: usize,
    bn: Option<BnIdx>,
}

#[derive(Clone, Copy, Debug)]
struct BnIdx {
    gamma: usize,
    beta: usize,
    mean: usize,
    var: usize,
}

/// Feed-forward network whose weights live in its own [`ParameterSet`].
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    pub params: ParameterSet,
    layers: Vec<LayerIdx>,
}

impl Mlp {
    /// Uniform fan-in initialization, `±1/√fan_in`.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self, NumError> {
        spec.validate()?;
        let widths = spec.widths();
        let mut params = ParameterSet::new();
        let mut layers = Vec::new();
        for l in 0..spec.num_layers() {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound);
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            let b: Vec<f64> = (0..fan_out).map(|_| dist.sample(rng)).collect();
            let wi = params.insert(format!("l{l}.w"), Tensor::from_raw(fan_in, fan_out, w), true);
            let bi = params.insert(format!("l{l}.b"), Tensor::from_raw(1, fan_out, b), true);
            let bn = (spec.batch_norm && l + 1 < spec.num_layers()).then(|| BnIdx {
                gamma: params.insert(format!("bn{l}.gamma"), Tensor::filled(1, fan_out, 1.0), true),
                beta: params.insert(format!("bn{l}.beta"), Tensor::zeros(1, fan_out), true),
                mean: params.insert(format!("bn{l}.running_mean"), Tensor::zeros(1, fan_out), false),
                var: params.insert(format!("bn{l}.running_var"), Tensor::filled(1, fan_out, 1.0), false),
            });
            layers.push(LayerIdx { w: wi, b: bi, bn });
        }
        Ok(Self { spec, params, layers })
    }

    /// Rebuilds a network around existing parameters (e.g. from a checkpoint).
    pub fn from_params(spec: MlpSpec, params: ParameterSet) -> Result<Self, NumError> {
        spec.validate()?;
        let widths = spec.widths();
        let find = |name: String, shape: (usize, usize)| -> Result<usize, NumError> {
            let i = params
                .index_of(&name)
                .ok_or_else(|| NumError::MissingParameter(name.clone()))?;
            if params.value(i).dims2() != shape {
                return Err(NumError::ShapeMismatch {
                    op: "from_params",
                    left: vec![shape.0, shape.1],
                    right: params.value(i).shape().to_vec(),
                });
            }
            Ok(i)
        };
        let mut layers = Vec::new();
        for l in 0..spec.num_layers() {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let w = find(format!("l{l}.w"), (fi, fo))?;
            let b = find(format!("l{l}.b"), (1, fo))?;
            let bn = if spec.batch_norm && l + 1 < spec.num_layers() {
                Some(BnIdx {
                    gamma: find(format!("bn{l}.gamma"), (1, fo))?,
                    beta: find(format!("bn{l}.beta"), (1, fo))?,
                    mean: find(format!("bn{l}.running_mean"), (1, fo))?,
                    var: find(format!("bn{l}.running_var"), (1, fo))?,
                })
            } else {
                None
            };
            layers.push(LayerIdx { w, b, bn });
        }
        Ok(Self { spec, params, layers })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn bind(&self, g: &mut Graph) -> Bound {
        self.params.bind(g)
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<(), NumError> {
        let got = g.value(x).cols();
        if got != self.spec.input {
            return Err(NumError::LayerShape {
                layer: 0,
                expected: self.spec.input,
                got,
            });
        }
        Ok(())
    }

    fn activate(g: &mut Graph, x: Var, act: Activation) -> Var {
        match act {
            Activation::Linear => x,
            Activation::LeakyRelu => g.leaky_relu(x, LEAKY_SLOPE),
            Activation::Tanh => g.tanh(x),
        }
    }

    /// Inference-mode forward pass; batch norm uses running statistics.
    pub fn forward(&self, g: &mut Graph, bound: &Bound, x: Var) -> Result<Var, NumError> {
        self.check_input(g, x)?;
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let z = g.matmul(h, bound.var(layer.w));
            let mut z = g.add_row(z, bound.var(layer.b));
            if let Some(bn) = layer.bn {
                // y = x·(γ/σ) + (β − μ·γ/σ) with running μ, σ.
                let inv: Vec<f64> = self.params.value(bn.var).data().iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mu_inv: Vec<f64> = inv
                    .iter()
                    .zip(self.params.value(bn.mean).data())
                    .map(|(i, m)| i * m)
                    .collect();
                let inv = g.constant(Tensor::row(&inv));
                let mu_inv = g.constant(Tensor::row(&mu_inv));
                let gamma = bound.var(bn.gamma);
                let scale = g.mul(gamma, inv);
                let shift_part = g.mul(gamma, mu_inv);
                let shift = g.sub(bound.var(bn.beta), shift_part);
                let zs = g.mul_row(z, scale);
                z = g.add_row(zs, shift);
            }
            h = Self::activate(g, z, self.spec.activations[l]);
        }
        Ok(h)
    }

    /// Training-mode forward pass; batch norm normalizes with batch statistics
    /// and folds them into the running averages.
    pub fn forward_train(&mut self, g: &mut Graph, bound: &Bound, x: Var) -> Result<Var, NumError> {
        self.check_input(g, x)?;
        let mut h = x;
        for l in 0..self.layers.len() {
            let layer = self.layers[l].clone();
            let z = g.matmul(h, bound.var(layer.w));
            let mut z = g.add_row(z, bound.var(layer.b));
            if let Some(bn) = layer.bn {
                let (y, stats) = g.batch_norm(z, bound.var(bn.gamma), bound.var(bn.beta));
                let n = g.value(z).rows() as f64;
                let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for (r, m) in self.params.value_mut(bn.mean).data_mut().iter_mut().zip(&stats.mean) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
                }
                for (r, v) in self.params.value_mut(bn.var).data_mut().iter_mut().zip(&stats.var) {
                    *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbiased;
                }
                z = y;
            }
            h = Self::activate(g, z, self.spec.activations[l]);
        }
        Ok(h)
    }

    /// Convenience inference on a plain tensor.
    pub fn infer(&self, input: &Tensor) -> Result<Tensor, NumError> {
        let mut g = Graph::new();
        let b = self.bind(&mut g);
        let x = g.constant(input.clone());
        let y = self.forward(&mut g, &b, x)?;
        Ok(g.value(y).clone())
    }

    /// Index of the output-layer weight `[last_hidden, output]` and bias.
    pub fn output_layer(&self) -> (usize, usize) {
        let l = self.layers.last().expect("at least one layer");
        (l.w, l.b)
    }
}
