//! Dense row-major matrix used for batched network activations.
//!
//! This is deliberately minimal: the network code only needs allocation,
//! indexing and a couple of GEMM-shaped kernels with the inner loop running
//! over contiguous memory.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Config(format!(
                "matrix data length {} does not match {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }
}

/// `out = x * w^T + broadcast(bias)` where `x` is `(n, in)` and `w` is `(out_dim, in)`
/// stored row-major, so each output feature reads one contiguous weight row.
pub fn affine_forward(x: &Matrix, w: &[f64], bias: &[f64], out: &mut Matrix) {
    let n = x.rows();
    let in_dim = x.cols();
    let out_dim = bias.len();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    debug_assert_eq!(out.rows(), n);
    debug_assert_eq!(out.cols(), out_dim);
    for i in 0..n {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for j in 0..out_dim {
            let wj = &w[j * in_dim..(j + 1) * in_dim];
            let mut acc = bias[j];
            for k in 0..in_dim {
                acc += xi[k] * wj[k];
            }
            oi[j] = acc;
        }
    }
}

/// Accumulates `dw += dy^T * x` and `db += colsum(dy)` for the affine layer above.
pub fn affine_grad_weights(dy: &Matrix, x: &Matrix, dw: &mut [f64], db: &mut [f64]) {
    let n = x.rows();
    let in_dim = x.cols();
    let out_dim = dy.cols();
    debug_assert_eq!(dw.len(), out_dim * in_dim);
    debug_assert_eq!(db.len(), out_dim);
    for i in 0..n {
        let xi = x.row(i);
        let gi = dy.row(i);
        for j in 0..out_dim {
            let g = gi[j];
            if g == 0.0 {
                continue;
            }
            db[j] += g;
            let wj = &mut dw[j * in_dim..(j + 1) * in_dim];
            for k in 0..in_dim {
                wj[k] += g * xi[k];
            }
        }
    }
}

/// `dx = dy * w` for the affine layer above, overwriting `dx`.
pub fn affine_grad_input(dy: &Matrix, w: &[f64], dx: &mut Matrix) {
    let n = dy.rows();
    let out_dim = dy.cols();
    let in_dim = dx.cols();
    debug_assert_eq!(w.len(), out_dim * in_dim);
    dx.fill(0.0);
    for i in 0..n {
        let gi = dy.row(i);
        let di = dx.row_mut(i);
        for j in 0..out_dim {
            let g = gi[j];
            if g == 0.0 {
                continue;
            }
            let wj = &w[j * in_dim..(j + 1) * in_dim];
            for k in 0..in_dim {
                di[k] += g * wj[k];
            }
        }
    }
}
