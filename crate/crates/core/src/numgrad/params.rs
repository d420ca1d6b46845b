use super::graph::{Gradients, Graph, Var};
use super::tensor::Tensor;
use super::NumError;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// First adaptive moment.
    pub m: Tensor,
    /// Second adaptive moment.
    pub v: Tensor,
    /// Buffers such as batch-norm running statistics are stored but never stepped.
    pub trainable: bool,
}

/// Named tensors with congruent gradient and moment buffers.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<Param>,
    /// Number of optimizer steps taken so far.
    pub step: u64,
}

/// Leaf handles of a [`ParameterSet`] bound onto one [`Graph`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, index: usize) -> Var {
        self.0[index]
    }
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor and returns its index.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> usize {
        let name = name.into();
        assert!(self.index_of(&name).is_none(), "duplicate parameter {name}");
        let (r, c) = value.dims2();
        self.entries.push(Param {
            name,
            grad: Tensor::zeros(r, c),
            m: Tensor::zeros(r, c),
            v: Tensor::zeros(r, c),
            value,
            trainable,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.iter().find(|p| p.name == name)
    }

    pub fn value(&self, index: usize) -> &Tensor {
        &self.entries[index].value
    }

    pub fn value_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.entries.iter_mut()
    }

    /// Total number of scalar values held by trainable entries.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(0.0);
        }
    }

    /// Places every entry on `g` as a leaf.
    pub fn bind(&self, g: &mut Graph) -> Bound {
        Bound(self.entries.iter().map(|p| g.leaf(p.value.clone())).collect())
    }

    /// Adds the gradients of bound leaves into the gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients, bound: &Bound) {
        for (p, &v) in self.entries.iter_mut().zip(&bound.0) {
            if let Some(g) = grads.get(v) {
                p.grad.add_assign(g);
            }
        }
    }

    /// `target ← τ·self + (1−τ)·target` over trainable and buffer entries alike.
    pub fn soft_update_into(&self, target: &mut ParameterSet, tau: f64) {
        for (src, dst) in self.entries.iter().zip(target.entries.iter_mut()) {
            debug_assert_eq!(src.name, dst.name);
            for (d, s) in dst.value.data_mut().iter_mut().zip(src.value.data()) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }

    /// Copies values (not optimizer state) from `other`, matched by name.
    pub fn copy_values_from(&mut self, other: &ParameterSet) -> Result<(), NumError> {
        for p in &mut self.entries {
            let src = other
                .get(&p.name)
                .ok_or_else(|| NumError::MissingParameter(p.name.clone()))?;
            if src.value.shape() != p.value.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "copy_values_from",
                    left: p.value.shape().to_vec(),
                    right: src.value.shape().to_vec(),
                });
            }
            p.value = src.value.clone();
        }
        Ok(())
    }

    /// Clears gradients, adaptive moments and the step counter, e.g. after
    /// copying pretrained weights into a network with a fresh optimizer.
    pub fn reset_optimizer(&mut self) {
        for p in &mut self.entries {
            p.grad.fill(0.0);
            p.m.fill(0.0);
            p.v.fill(0.0);
        }
        self.step = 0;
    }

    /// Order-sensitive FNV-1a digest of all values, for cheap equality checks.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for p in &self.entries {
            for v in p.value.data() {
                for b in v.to_bits().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }
}

/// Adaptive-moment optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Adam {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// One bias-corrected Adam step over every trainable entry.
///
/// Gradients are left untouched; a non-finite gradient aborts before any
/// parameter is modified.
pub fn adam_step(params: &mut ParameterSet, cfg: &Adam) -> Result<(), NumError> {
    if let Some(p) = params
        .entries
        .iter()
        .find(|p| p.trainable && !p.grad.is_finite())
    {
        return Err(NumError::NonFiniteGradient(p.name.clone()));
    }
    params.step += 1;
    let t = params.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for p in params.entries.iter_mut().filter(|p| p.trainable) {
        let g = p.grad.data();
        let m = p.m.data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
        }
        let v = p.v.data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m, v) = (p.m.data(), p.v.data());
        for ((x, mi), vi) in p.value.data_mut().iter_mut().zip(m).zip(v) {
            let mhat = mi / bc1;
            let vhat = vi / bc2;
            *x -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_set(x: f64) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::scalar(x), true);
        p
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = scalar_set(1.25);
        adam_step(&mut p, &Adam::default()).unwrap();
        assert_eq!(p.value(0).item(), 1.25);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut p = scalar_set(0.0);
        for _ in 0..50 {
            p.iter_mut().next().unwrap().grad = Tensor::scalar(2.0);
            adam_step(&mut p, &Adam::with_lr(1e-2)).unwrap();
        }
        assert!(p.value(0).item() < -0.4);
    }

    #[test]
    fn three_step_recursion_matches_hand_computation() {
        // Hand-unrolled moment recursion for gradients 1, -2, 0.5 with
        // lr=0.1, β1=0.9, β2=0.999, ε=1e-8, starting at x=1.
        let cfg = Adam {
            learning_rate: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        };
        let grads = [1.0, -2.0, 0.5];
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 1.0f64);
        let mut expected = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mhat = m / (1.0 - 0.9f64.powi(t as i32 + 1));
            let vhat = v / (1.0 - 0.999f64.powi(t as i32 + 1));
            x -= 0.1 * mhat / (vhat.sqrt() + 1e-8);
            expected.push(x);
        }
        // Frozen values of the recursion above.
        let frozen = [0.9000000009999999, 0.9366103534720748, 0.9502794196738215];
        let mut p = scalar_set(1.0);
        for (i, g) in grads.iter().enumerate() {
            p.iter_mut().next().unwrap().grad = Tensor::scalar(*g);
            adam_step(&mut p, &cfg).unwrap();
            assert!((p.value(0).item() - expected[i]).abs() <= 1e-12);
            assert!((p.value(0).item() - frozen[i]).abs() <= 1e-12, "{}", p.value(0).item());
        }
        assert_eq!(p.iter().next().unwrap().grad.item(), 0.5, "gradients unchanged");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_set(0.0);
        p.iter_mut().next().unwrap().grad = Tensor::scalar(f64::NAN);
        match adam_step(&mut p, &Adam::default()) {
            Err(NumError::NonFiniteGradient(name)) => assert_eq!(name, "x"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(p.value(0).item(), 0.0);
    }

    #[test]
    fn adam_is_bit_deterministic() {
        let mut a = scalar_set(0.3);
        a.insert("w", Tensor::row(&[1.0, -2.0, 3.0]), true);
        let mut b = a.clone();
        for set in [&mut a, &mut b] {
            for p in set.iter_mut() {
                p.grad = p.value.map(|x| x.sin() + 0.1);
            }
            adam_step(set, &Adam::default()).unwrap();
        }
        assert_eq!(a.checksum(), b.checksum());
        assert_eq!(a, b);
    }

    #[test]
    fn zero_grad_keeps_values() {
        let mut p = scalar_set(4.0);
        p.iter_mut().next().unwrap().grad = Tensor::scalar(3.0);
        p.zero_grad();
        assert_eq!(p.value(0).item(), 4.0);
        assert_eq!(p.iter().next().unwrap().grad.item(), 0.0);
    }
}
