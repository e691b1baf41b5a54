use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// A fixed collection of parameter tensors, visited in a stable order.
///
/// Gradients and optimizer moments reuse the implementing type, so a
/// gradient is just another instance with the same shapes.
pub trait ParamSet {
    fn tensors(&self) -> Vec<&[f64]>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    fn fill(&mut self, v: f64) {
        for t in self.tensors_mut() {
            t.fill(v);
        }
    }

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += other`, tensor by tensor.
    fn accumulate(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Uniform Glorot initialization bound.
pub(crate) fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Matrix::from_vec_unchecked(rows, cols, data)
}

/// `y = W·x + b`
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn new(rng: &mut ChaCha8Rng, input: usize, output: usize) -> Self {
        Self {
            w: glorot(rng, output, input),
            b: vec![0.0; output],
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(output, input),
            b: vec![0.0; output],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::shape(format!(
                "dense layer expects input {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(affine(&self.w, &self.b, x))
    }

    /// Accumulates `∂/∂W`, `∂/∂b` into `grad` and returns `∂/∂x`.
    pub fn backward(&self, x: &[f64], gy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let mut gx = vec![0.0; self.input_dim()];
        outer_acc(&mut grad.w, gy, x);
        for (b, g) in grad.b.iter_mut().zip(gy) {
            *b += g;
        }
        t_matvec_acc(&self.w, gy, &mut gx);
        gx
    }
}

impl ParamSet for Dense {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![self.w.as_slice(), &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.w.as_mut_slice(), &mut self.b]
    }
}

#[inline]
pub(crate) fn affine(w: &Matrix, b: &[f64], x: &[f64]) -> Vec<f64> {
    w.row_iter()
        .zip(b)
        .map(|(row, bi)| bi + row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

/// `m += a·bᵀ`
#[inline]
pub(crate) fn outer_acc(m: &mut Matrix, a: &[f64], b: &[f64]) {
    for (i, &ai) in a.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (mij, bj) in m.row_mut(i).iter_mut().zip(b) {
            *mij += ai * bj;
        }
    }
}

/// `out += Wᵀ·g`
#[inline]
pub(crate) fn t_matvec_acc(w: &Matrix, g: &[f64], out: &mut [f64]) {
    for (row, &gi) in w.row_iter().zip(g) {
        if gi == 0.0 {
            continue;
        }
        for (o, wij) in out.iter_mut().zip(row) {
            *o += gi * wij;
        }
    }
}
