//! Minimal f64 dense matrix support for the classifiers.
//!
//! Training happens entirely in f64 so finite-difference gradient checks
//! are meaningful; feature storage stays f32 and is widened on gather.

use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct DMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DMat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Gathers stack rows for a node batch, widening f32 to f64.
    pub fn gather(features: &FeatureMatrix, batch: &[u64]) -> Self {
        let cols = features.dim();
        let mut out = DMat::zeros(batch.len(), cols);
        for (i, &node) in batch.iter().enumerate() {
            for (o, v) in out.row_mut(i).iter_mut().zip(features.row(node as usize)) {
                *o = *v as f64;
            }
        }
        out
    }

    /// self * other, (r x k)(k x c) -> (r x c).
    pub fn matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.cols, other.rows);
        let mut out = DMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let orow = &other.data[k * other.cols..(k + 1) * other.cols];
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// selfᵀ * other, (k x r)ᵀ(k x c) -> (r x c).
    pub fn t_matmul(&self, other: &DMat) -> DMat {
        assert_eq!(self.rows, other.rows);
        let mut out = DMat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let arow = self.row(k);
            let brow = other.row(k);
            for (i, a) in arow.iter().enumerate() {
                if *a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self * otherᵀ, (r x k)(c x k)ᵀ -> (r x c).
    pub fn matmul_t(&self, other: &DMat) -> DMat {
        assert_eq!(self.cols, other.cols);
        let mut out = DMat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            let arow = self.row(i);
            for j in 0..other.rows {
                let brow = other.row(j);
                let mut acc = 0.0;
                for (a, b) in arow.iter().zip(brow) {
                    acc += a * b;
                }
                out.data[i * other.rows + j] = acc;
            }
        }
        out
    }

    /// Adds `bias` (length cols) to every row.
    pub fn add_bias(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols);
        for i in 0..self.rows {
            for (v, b) in self.row_mut(i).iter_mut().zip(bias) {
                *v += b;
            }
        }
    }

    /// Column sums, the bias gradient of a row-broadcast add.
    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (o, v) in out.iter_mut().zip(self.row(i)) {
                *o += v;
            }
        }
        out
    }

    /// Per-row dot product with `other` of identical shape.
    pub fn row_dots(&self, other: &DMat) -> Vec<f64> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(other.row(i))
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// Matrix-vector product, (r x c)(c) -> (r).
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len());
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

pub fn relu(m: &DMat) -> DMat {
    let mut out = m.clone();
    for v in &mut out.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Masks `grad` by the active set of `pre` (the relu input).
pub fn relu_backward(grad: &DMat, pre: &DMat) -> DMat {
    let mut out = grad.clone();
    for (g, p) in out.data.iter_mut().zip(&pre.data) {
        if *p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn leaky_relu_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

pub fn leaky_relu_grad_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
