use std::fmt;

use rand::Rng;

use super::ToyError;

/// Row-major dense `f64` array. Shape mismatches are errors; nothing
/// broadcasts.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}{:?}", self.shape, self.data)
    }
}

impl Tensor {
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, ToyError> {
        if shape.iter().any(|&d| d == 0) {
            return Err(ToyError::ShapeMismatch(format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(ToyError::ShapeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Entries drawn uniformly from `[-bound, bound)`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            shape: shape.to_vec(),
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

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("non-empty shape")
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        let cols = self.cols();
        self.data[r * cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn expect_matrix(&self, what: &str) -> Result<(usize, usize), ToyError> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(ToyError::ShapeMismatch(format!("{what} must be 2-D, got {:?}", self.shape))),
        }
    }

    /// Collapses leading dimensions: `[.., n]` becomes `[prod(..), n]`.
    pub fn flatten_rows(&self) -> Tensor {
        let cols = self.cols();
        Tensor {
            shape: vec![self.data.len() / cols, cols],
            data: self.data.clone(),
        }
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Tensor, ToyError> {
        Tensor::from_vec(shape, self.data)
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor, ToyError> {
        let (m, k) = self.expect_matrix("lhs")?;
        let (k2, n) = other.expect_matrix("rhs")?;
        if k != k2 {
            return Err(ToyError::ShapeMismatch(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a = self.data[i * k + p];
                let rhs = &other.data[p * n..(p + 1) * n];
                for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `self · otherᵀ`, the row-vector form of applying a linear map.
    pub fn matmul_t(&self, other: &Tensor) -> Result<Tensor, ToyError> {
        let (m, k) = self.expect_matrix("lhs")?;
        let (n, k2) = other.expect_matrix("rhs")?;
        if k != k2 {
            return Err(ToyError::ShapeMismatch(format!("matmul {m}x{k} by ({n}x{k2})ᵀ")));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b = &other.data[j * k..(j + 1) * k];
                out[i * n + j] = a.iter().zip(b).map(|(x, y)| x * y).sum();
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    /// `selfᵀ · other`, used for weight gradients.
    pub fn t_matmul(&self, other: &Tensor) -> Result<Tensor, ToyError> {
        let (k, m) = self.expect_matrix("lhs")?;
        let (k2, n) = other.expect_matrix("rhs")?;
        if k != k2 {
            return Err(ToyError::ShapeMismatch(format!("({k}x{m})ᵀ by {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        for p in 0..k {
            let rhs = &other.data[p * n..(p + 1) * n];
            for i in 0..m {
                let a = self.data[p * m + i];
                for (o, b) in out[i * n..(i + 1) * n].iter_mut().zip(rhs) {
                    *o += a * b;
                }
            }
        }
        Ok(Tensor {
            shape: vec![m, n],
            data: out,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, ToyError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor, ToyError> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), ToyError> {
        self.check_same(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    fn check_same(&self, other: &Tensor) -> Result<(), ToyError> {
        if self.shape != other.shape {
            return Err(ToyError::ShapeMismatch(format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, ToyError> {
        self.check_same(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    /// Columns `start..start + width` of a matrix.
    pub fn column_block(&self, start: usize, width: usize) -> Tensor {
        let (rows, cols) = (self.rows(), self.cols());
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * cols + start..r * cols + start + width]);
        }
        Tensor {
            shape: vec![rows, width],
            data,
        }
    }

    /// Writes `block` into columns starting at `start`.
    pub fn set_column_block(&mut self, start: usize, block: &Tensor) {
        let (rows, cols, width) = (self.rows(), self.cols(), block.cols());
        for r in 0..rows {
            self.data[r * cols + start..r * cols + start + width].copy_from_slice(block.row(r));
        }
    }

    /// Stacks two matrices with equal column counts.
    pub fn vstack(&self, other: &Tensor) -> Result<Tensor, ToyError> {
        let (r1, c1) = self.expect_matrix("top")?;
        let (r2, c2) = other.expect_matrix("bottom")?;
        if c1 != c2 {
            return Err(ToyError::ShapeMismatch(format!("vstack {r1}x{c1} over {r2}x{c2}")));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            shape: vec![r1 + r2, c1],
            data,
        })
    }

    /// Raw bit patterns, for exact before/after comparisons.
    pub fn to_bits(&self) -> Vec<u64> {
        self.data.iter().map(|v| v.to_bits()).collect()
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Tensor) -> Tensor {
    let cols = logits.cols();
    let mut out = logits.clone();
    for row in out.data.chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}
