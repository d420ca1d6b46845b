use super::tensor::{gemm, Tensor};
use super::NumError;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `[n, c] + [1, c]`
    AddRow(Var, Var),
    /// `[n, c] ⊙ [1, c]`
    MulRow(Var, Var),
    /// `[n, c] ⊙ [n, 1]`
    MulCol(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Concat(Vec<Var>),
    Slice(Var, usize, usize),
    Gather(Var, Vec<usize>),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Reverse-mode tape. Operations append nodes; [`Graph::backward`] walks them
/// in reverse.
#[derive(Default, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`]. Only leaf gradients are kept.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

/// Batch statistics observed by a training-mode batch normalization node.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

pub const BN_EPS: f64 = 1e-5;

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Leaf node. Gradients reach it but propagate no further.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t)
    }

    /// Stop-gradient: a new leaf holding a copy of `v`'s value.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.leaf(t)
    }

    fn binary_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.dims2(),
            tb.dims2(),
            "{name}: shape mismatch {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let (r, c) = ta.dims2();
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_raw(r, c, data)
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        let (r, c) = t.dims2();
        Tensor::from_raw(r, c, t.data().iter().map(|&x| f(x)).collect())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(
            ta.cols(),
            tb.rows(),
            "matmul: shape mismatch {:?} x {:?}",
            ta.shape(),
            tb.shape()
        );
        let out = gemm(ta, false, tb, false);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Var {
        let (tx, tr) = (self.value(x), self.value(row));
        let (n, c) = tx.dims2();
        assert_eq!(tr.dims2(), (1, c), "add_row: row must be [1, {c}]");
        let mut data = tx.data().to_vec();
        for i in 0..n {
            for (d, b) in data[i * c..(i + 1) * c].iter_mut().zip(tr.data()) {
                *d += b;
            }
        }
        self.push(Tensor::from_raw(n, c, data), Op::AddRow(x, row))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Var {
        let (tx, tr) = (self.value(x), self.value(row));
        let (n, c) = tx.dims2();
        assert_eq!(tr.dims2(), (1, c), "mul_row: row must be [1, {c}]");
        let mut data = tx.data().to_vec();
        for i in 0..n {
            for (d, b) in data[i * c..(i + 1) * c].iter_mut().zip(tr.data()) {
                *d *= b;
            }
        }
        self.push(Tensor::from_raw(n, c, data), Op::MulRow(x, row))
    }

    pub fn mul_col(&mut self, x: Var, col: Var) -> Var {
        let (tx, tc) = (self.value(x), self.value(col));
        let (n, c) = tx.dims2();
        assert_eq!(tc.dims2(), (n, 1), "mul_col: column must be [{n}, 1]");
        let mut data = tx.data().to_vec();
        for i in 0..n {
            let s = tc.data()[i];
            data[i * c..(i + 1) * c].iter_mut().for_each(|d| *d *= s);
        }
        self.push(Tensor::from_raw(n, c, data), Op::MulCol(x, col))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary_same(a, b, "add", |x, y| x + y);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary_same(a, b, "sub", |x, y| x - y);
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary_same(a, b, "mul", |x, y| x * y);
        self.push(t, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary_same(a, b, "div", |x, y| x / y);
        self.push(t, Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let t = self.unary(a, |x| x * k);
        self.push(t, Op::Scale(a, k))
    }

    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let t = self.unary(a, |x| x + k);
        self.push(t, Op::Offset(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let t = self.unary(a, |x| if x > 0.0 { x } else { slope * x });
        self.push(t, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::exp);
        self.push(t, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::ln);
        self.push(t, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.unary(a, |x| x * x);
        self.push(t, Op::Square(a))
    }

    /// Clamp with pass-through gradient on the closed interval `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let t = self.unary(a, |x| x.clamp(lo, hi));
        self.push(t, Op::Clamp(a, lo, hi))
    }

    /// Elementwise minimum; ties send the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary_same(a, b, "minimum", f64::min);
        self.push(t, Op::Minimum(a, b))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// `[n, c] -> [n, 1]`
    pub fn row_sum(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let (n, _) = t.dims2();
        let data = (0..n).map(|i| t.row_slice(i).iter().sum()).collect();
        self.push(Tensor::from_raw(n, 1, data), Op::RowSum(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let n = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let t = self.value(p);
                assert_eq!(t.rows(), n, "concat_cols: row counts differ");
                t.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for i in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        self.push(Tensor::from_raw(n, total, data), Op::Concat(parts.to_vec()))
    }

    /// Columns `[start, end)`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let t = self.value(a);
        let (n, c) = t.dims2();
        assert!(start < end && end <= c, "slice_cols: [{start},{end}) out of {c}");
        let mut data = Vec::with_capacity(n * (end - start));
        for i in 0..n {
            data.extend_from_slice(&t.row_slice(i)[start..end]);
        }
        self.push(Tensor::from_raw(n, end - start, data), Op::Slice(a, start, end))
    }

    /// Row `i` of the result is row `indices[i]` of `a`; rows may repeat.
    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let t = self.value(a);
        let (n, c) = t.dims2();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            assert!(i < n, "gather_rows: row {i} out of {n}");
            data.extend_from_slice(t.row_slice(i));
        }
        self.push(Tensor::from_raw(indices.len(), c, data), Op::Gather(a, indices.to_vec()))
    }

    /// Training-mode batch normalization over the rows of `x`.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var) -> (Var, BatchStats) {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        assert_eq!(self.value(gamma).dims2(), (1, c));
        assert_eq!(self.value(beta).dims2(), (1, c));
        let mut mean = vec![0.0; c];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(tx.row_slice(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; c];
        for i in 0..n {
            for ((s, v), m) in var.iter_mut().zip(tx.row_slice(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = vec![0.0; n * c];
        for i in 0..n {
            for j in 0..c {
                xhat[i * c + j] = (tx.get(i, j) - mean[j]) * inv_std[j];
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let out: Vec<f64> = xhat
            .iter()
            .enumerate()
            .map(|(idx, &h)| g[idx % c] * h + b[idx % c])
            .collect();
        let xhat = Tensor::from_raw(n, c, xhat);
        let v = self.push(
            Tensor::from_raw(n, c, out),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        );
        (v, BatchStats { mean, var })
    }

    /// Gradients of the scalar `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, NumError> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(NumError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(gout) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let (n, c) = node.value.dims2();
            match &node.op {
                Op::Leaf => {
                    grads[i] = Some(gout);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = gemm(&gout, false, self.value(*b), true);
                    let gb = gemm(self.value(*a), true, &gout, false);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(x, row) => {
                    let mut gr = vec![0.0; c];
                    for r in 0..n {
                        for (s, v) in gr.iter_mut().zip(gout.row_slice(r)) {
                            *s += v;
                        }
                    }
                    acc(&mut grads, *row, Tensor::from_raw(1, c, gr));
                    acc(&mut grads, *x, gout);
                }
                Op::MulRow(x, row) => {
                    let (tx, tr) = (self.value(*x), self.value(*row));
                    let mut gx = gout.data().to_vec();
                    let mut gr = vec![0.0; c];
                    for r in 0..n {
                        for j in 0..c {
                            let g = gout.get(r, j);
                            gx[r * c + j] = g * tr.data()[j];
                            gr[j] += g * tx.get(r, j);
                        }
                    }
                    acc(&mut grads, *x, Tensor::from_raw(n, c, gx));
                    acc(&mut grads, *row, Tensor::from_raw(1, c, gr));
                }
                Op::MulCol(x, col) => {
                    let (tx, tc) = (self.value(*x), self.value(*col));
                    let mut gx = gout.data().to_vec();
                    let mut gc = vec![0.0; n];
                    for r in 0..n {
                        let s = tc.data()[r];
                        for j in 0..c {
                            let g = gout.get(r, j);
                            gx[r * c + j] = g * s;
                            gc[r] += g * tx.get(r, j);
                        }
                    }
                    acc(&mut grads, *x, Tensor::from_raw(n, c, gx));
                    acc(&mut grads, *col, Tensor::from_raw(n, 1, gc));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, gout.clone());
                    acc(&mut grads, *a, gout);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, gout.map(|g| -g));
                    acc(&mut grads, *a, gout);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&gout, tb, |g, y| g * y);
                    let gb = zip_map(&gout, ta, |g, x| g * x);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Div(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = zip_map(&gout, tb, |g, y| g / y);
                    let gb = zip3_map(&gout, ta, tb, |g, x, y| -g * x / (y * y));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, gout.map(|g| g * k)),
                Op::Offset(a) => acc(&mut grads, *a, gout),
                Op::LeakyRelu(a, slope) => {
                    let ga = zip_map(&gout, self.value(*a), |g, x| if x > 0.0 { g } else { g * slope });
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&gout, &node.value, |g, y| g * (1.0 - y * y));
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_map(&gout, &node.value, |g, y| g * y);
                    acc(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = zip_map(&gout, self.value(*a), |g, x| g / x);
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = zip_map(&gout, self.value(*a), |g, x| 2.0 * g * x);
                    acc(&mut grads, *a, ga);
                }
                Op::Clamp(a, lo, hi) => {
                    let ga = zip_map(&gout, self.value(*a), |g, x| {
                        if x >= *lo && x <= *hi {
                            g
                        } else {
                            0.0
                        }
                    });
                    acc(&mut grads, *a, ga);
                }
                Op::Minimum(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let ga = zip3_map(&gout, ta, tb, |g, x, y| if x <= y { g } else { 0.0 });
                    let gb = zip3_map(&gout, ta, tb, |g, x, y| if x <= y { 0.0 } else { g });
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Sum(a) => {
                    let (r, cc) = self.value(*a).dims2();
                    acc(&mut grads, *a, Tensor::filled(r, cc, gout.item()));
                }
                Op::Mean(a) => {
                    let (r, cc) = self.value(*a).dims2();
                    acc(&mut grads, *a, Tensor::filled(r, cc, gout.item() / (r * cc) as f64));
                }
                Op::RowSum(a) => {
                    let (r, cc) = self.value(*a).dims2();
                    let mut ga = Vec::with_capacity(r * cc);
                    for row in 0..r {
                        ga.extend(std::iter::repeat(gout.data()[row]).take(cc));
                    }
                    acc(&mut grads, *a, Tensor::from_raw(r, cc, ga));
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let mut gp = Vec::with_capacity(n * w);
                        for r in 0..n {
                            gp.extend_from_slice(&gout.row_slice(r)[offset..offset + w]);
                        }
                        acc(&mut grads, p, Tensor::from_raw(n, w, gp));
                        offset += w;
                    }
                }
                Op::Slice(a, start, end) => {
                    let ca = self.value(*a).cols();
                    let mut ga = vec![0.0; n * ca];
                    for r in 0..n {
                        ga[r * ca + start..r * ca + end].copy_from_slice(gout.row_slice(r));
                    }
                    acc(&mut grads, *a, Tensor::from_raw(n, ca, ga));
                }
                Op::Gather(a, indices) => {
                    let (ra, ca) = self.value(*a).dims2();
                    let mut ga = vec![0.0; ra * ca];
                    for (r, &src) in indices.iter().enumerate() {
                        for (d, g) in ga[src * ca..(src + 1) * ca].iter_mut().zip(gout.row_slice(r)) {
                            *d += g;
                        }
                    }
                    acc(&mut grads, *a, Tensor::from_raw(ra, ca, ga));
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let gam = self.value(*gamma).data();
                    let mut dgamma = vec![0.0; c];
                    let mut dbeta = vec![0.0; c];
                    let mut sum_dxhat = vec![0.0; c];
                    let mut sum_dxhat_xhat = vec![0.0; c];
                    for r in 0..n {
                        for j in 0..c {
                            let g = gout.get(r, j);
                            let h = xhat.get(r, j);
                            dgamma[j] += g * h;
                            dbeta[j] += g;
                            let dh = g * gam[j];
                            sum_dxhat[j] += dh;
                            sum_dxhat_xhat[j] += dh * h;
                        }
                    }
                    let nf = n as f64;
                    let mut dx = vec![0.0; n * c];
                    for r in 0..n {
                        for j in 0..c {
                            let dh = gout.get(r, j) * gam[j];
                            dx[r * c + j] = inv_std[j] / nf
                                * (nf * dh - sum_dxhat[j] - xhat.get(r, j) * sum_dxhat_xhat[j]);
                        }
                    }
                    acc(&mut grads, *x, Tensor::from_raw(n, c, dx));
                    acc(&mut grads, *gamma, Tensor::from_raw(1, c, dgamma));
                    acc(&mut grads, *beta, Tensor::from_raw(1, c, dbeta));
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (r, c) = a.dims2();
    Tensor::from_raw(r, c, a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect())
}

fn zip3_map(a: &Tensor, b: &Tensor, c3: &Tensor, f: impl Fn(f64, f64, f64) -> f64) -> Tensor {
    let (r, c) = a.dims2();
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .zip(c3.data())
        .map(|((&x, &y), &z)| f(x, y, z))
        .collect();
    Tensor::from_raw(r, c, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences of `f` with respect to every entry of `x0`.
    fn numeric_grad(x0: &Tensor, f: impl Fn(&Tensor) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..x0.len())
            .map(|i| {
                let mut xp = x0.clone();
                xp.data_mut()[i] += h;
                let mut xm = x0.clone();
                xm.data_mut()[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    fn check_unary(build: impl Fn(&mut Graph, Var) -> Var, x0: Tensor) {
        let eval = |x: &Tensor| {
            let mut g = Graph::new();
            let v = g.leaf(x.clone());
            let y = build(&mut g, v);
            let s = g.sum(y);
            g.value(s).item()
        };
        let mut g = Graph::new();
        let v = g.leaf(x0.clone());
        let y = build(&mut g, v);
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        let analytic = grads.get(v).unwrap().data().to_vec();
        let numeric = numeric_grad(&x0, eval);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!((a - n).abs() <= 1e-6 * (1.0 + n.abs()), "analytic {a} vs numeric {n}");
        }
    }

    fn sample() -> Tensor {
        Tensor::from_rows(&[vec![0.3, -1.2, 2.0], vec![-0.7, 0.9, 0.1]]).unwrap()
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        check_unary(|g, x| g.tanh(x), sample());
        check_unary(|g, x| g.exp(x), sample());
        check_unary(|g, x| g.square(x), sample());
        check_unary(|g, x| g.leaky_relu(x, 0.01), sample());
        check_unary(|g, x| g.clamp(x, -1.0, 1.0), sample());
        check_unary(
            |g, x| {
                let e = g.exp(x);
                g.log(e)
            },
            sample(),
        );
        check_unary(
            |g, x| {
                let a = g.slice_cols(x, 1, 3);
                let b = g.slice_cols(x, 0, 2);
                let d = g.div(a, b);
                let m = g.minimum(d, b);
                g.row_sum(m)
            },
            sample(),
        );
    }

    #[test]
    fn batch_norm_matches_finite_differences() {
        let x0 = Tensor::from_rows(&[vec![0.3, -1.2], vec![-0.7, 0.9], vec![1.5, 0.2], vec![0.1, 0.4]]).unwrap();
        let weights = Tensor::from_rows(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![-1.0, 0.25], vec![2.0, 1.0]]).unwrap();
        let build = |g: &mut Graph, x: Var| {
            let gamma = g.constant(Tensor::row(&[1.5, 0.7]));
            let beta = g.constant(Tensor::row(&[0.1, -0.2]));
            let (y, _) = g.batch_norm(x, gamma, beta);
            let w = g.constant(weights.clone());
            g.mul(y, w)
        };
        check_unary(build, x0);
    }

    #[test]
    fn gather_rows_scatters_gradients_back() {
        let weights = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0], vec![4.0, -2.0, 1.0]]).unwrap();
        check_unary(
            |g, x| {
                let r = g.gather_rows(x, &[1, 0, 1]);
                let w = g.constant(weights.clone());
                let p = g.mul(r, w);
                g.square(p)
            },
            sample(),
        );
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let v = g.leaf(sample());
        assert!(matches!(g.backward(v), Err(NumError::NonScalarLoss(_))));
    }

    #[test]
    fn shared_subexpressions_accumulate() {
        // y = x*x + x  =>  dy/dx = 2x + 1
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(3.0));
        let xx = g.mul(x, x);
        let y = g.add(xx, x);
        let grads = g.backward(y).unwrap();
        assert_eq!(grads.get(x).unwrap().item(), 7.0);
    }
}
