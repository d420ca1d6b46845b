use super::NumError;

/// Dense row-major array of `f64`.
///
/// Every value that flows through a [`Graph`](super::Graph) is two-dimensional
/// (`[rows, cols]`); vectors are stored as single rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NumError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(NumError::InvalidShape(shape));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NumError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be positive");
        Self {
            shape: vec![rows, cols],
            data: vec![value; rows * cols],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    /// A `[1, n]` row vector.
    pub fn row(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "row vector must be nonempty");
        Self {
            shape: vec![1, values.len()],
            data: values.to_vec(),
        }
    }

    /// A `[n, 1]` column vector.
    pub fn column(values: &[f64]) -> Self {
        assert!(!values.is_empty(), "column vector must be nonempty");
        Self {
            shape: vec![values.len(), 1],
            data: values.to_vec(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, NumError> {
        let n = rows.len();
        let c = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(n * c);
        for r in rows {
            let r = r.as_ref();
            if r.len() != c {
                return Err(NumError::ShapeMismatch {
                    op: "from_rows",
                    left: vec![n, c],
                    right: vec![1, r.len()],
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(vec![n, c], data)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the shape as `[rows, cols]`; 1-d shapes are a single row.
    pub fn dims2(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [r, c] => (*r, *c),
            s => (s[0], s[1..].iter().product()),
        }
    }

    pub fn rows(&self) -> usize {
        self.dims2().0
    }

    pub fn cols(&self) -> usize {
        self.dims2().1
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    /// The single value of a `[1, 1]` tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub(crate) fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }
}

/// `C = op(A) · op(B)` for row-major matrices, with optional transposes.
pub(crate) fn gemm(
    a: &Tensor,
    trans_a: bool,
    b: &Tensor,
    trans_b: bool,
) -> Tensor {
    let (ar, ac) = a.dims2();
    let (br, bc) = b.dims2();
    let (m, k, rsa, csa) = if trans_a {
        (ac, ar, 1isize, ac as isize)
    } else {
        (ar, ac, ac as isize, 1isize)
    };
    let (k2, n, rsb, csb) = if trans_b {
        (bc, br, 1isize, bc as isize)
    } else {
        (br, bc, bc as isize, 1isize)
    };
    assert_eq!(k, k2, "gemm inner dimensions differ");
    let mut out = vec![0.0; m * n];
    // SAFETY: pointers and strides describe the live buffers above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Tensor::from_raw(m, n, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
        assert_eq!(Tensor::new(vec![2, 3], vec![0.0; 6]).unwrap().dims2(), (2, 3));
    }

    #[test]
    fn gemm_matches_naive_with_transposes() {
        let a = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0, 0.5], vec![-1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let c = gemm(&a, false, &b, false);
        assert_eq!(c.data(), &[-1.0, 13.5, -1.0, 30.0]);
        // aᵀ·a is 3x3
        let ata = gemm(&a, true, &a, false);
        assert_eq!(ata.dims2(), (3, 3));
        assert_eq!(ata.get(0, 0), 17.0);
        assert_eq!(ata.get(1, 2), 2.0 * 3.0 + 5.0 * 6.0);
        let abt = gemm(&a, false, &a, true);
        assert_eq!(abt.get(0, 1), 4.0 + 10.0 + 18.0);
    }
}
