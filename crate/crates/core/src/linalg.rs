//! Minimal dense matrix support for the toy models.
//!
//! The matmul routine doubles as the instrumentation point: it reports the
//! nominal multiply count (`m*k*n`) and the number of multiplies whose
//! operands are both nonzero, which is what a zero-skipping accelerator
//! actually executes.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

/// Multiply counters accumulated while building one trace entry.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpCounter {
    pub mult_total: u64,
    pub mult_nonzero: u64,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Mat { rows, cols, data }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mat(&self, r: usize) -> Mat {
        Mat::from_rows(1, self.cols, self.row(r).to_vec())
    }

    pub fn nonzero(&self) -> u64 {
        self.data.iter().filter(|v| **v != 0.0).count() as u64
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// `self * other`, counting nominal and zero-skipped multiplies.
    pub fn matmul(&self, other: &Mat, counter: &mut OpCounter) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (m, k, n) = (self.rows, self.cols, other.cols);
        counter.mult_total += (m * k * n) as u64;

        // Effective multiplies: pairs (A[i,l], B[l,j]) with both operands
        // nonzero, counted per shared index l.
        for l in 0..k {
            let mut a_nnz = 0u64;
            for i in 0..m {
                if self.at(i, l) != 0.0 {
                    a_nnz += 1;
                }
            }
            let mut b_nnz = 0u64;
            for j in 0..n {
                if other.at(l, j) != 0.0 {
                    b_nnz += 1;
                }
            }
            counter.mult_nonzero += a_nnz * b_nnz;
        }

        let mut out = Mat::zeros(m, n);
        for i in 0..m {
            for l in 0..k {
                let a = self.at(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.at(l, j);
                }
            }
        }
        out
    }

    /// `self * other^T`, counting like [`Mat::matmul`]. Lets attention score
    /// computations avoid materialising transposes.
    pub fn matmul_bt(&self, other: &Mat, counter: &mut OpCounter) -> Mat {
        assert_eq!(self.cols, other.cols, "matmul_bt shape mismatch");
        let (m, k, n) = (self.rows, self.cols, other.rows);
        counter.mult_total += (m * k * n) as u64;

        for l in 0..k {
            let mut a_nnz = 0u64;
            for i in 0..m {
                if self.at(i, l) != 0.0 {
                    a_nnz += 1;
                }
            }
            let mut b_nnz = 0u64;
            for j in 0..n {
                if other.at(j, l) != 0.0 {
                    b_nnz += 1;
                }
            }
            counter.mult_nonzero += a_nnz * b_nnz;
        }

        let mut out = Mat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += self.at(i, l) * other.at(j, l);
                }
                out.data[i * n + j] = acc;
            }
        }
        out
    }

    pub fn add_row_bias(&mut self, bias: &[f64]) {
        assert_eq!(bias.len(), self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                self.data[r * self.cols + c] += bias[c];
            }
        }
    }

    pub fn add(&mut self, other: &Mat) {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn relu(&mut self) {
        for v in self.data.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    /// Row-wise softmax with an optional per-element scale applied first.
    /// Exponentials and divisions are not billed as multiplies.
    pub fn softmax_rows(&mut self, scale: f64) {
        for r in 0..self.rows {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            let mut max = f64::NEG_INFINITY;
            for v in row.iter() {
                let s = *v * scale;
                if s > max {
                    max = s;
                }
            }
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = math::exp(*v * scale - max);
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_counts_total_and_nonzero() {
        // A = [1 0; 2 3], B = [4 0; 0 5]
        let a = Mat::from_rows(2, 2, vec![1.0, 0.0, 2.0, 3.0]);
        let b = Mat::from_rows(2, 2, vec![4.0, 0.0, 0.0, 5.0]);
        let mut c = OpCounter::default();
        let out = a.matmul(&b, &mut c);
        assert_eq!(out.data, vec![4.0, 0.0, 8.0, 15.0]);
        assert_eq!(c.mult_total, 8);
        // l=0: A col nnz = 2 (1,2), B row nnz = 1 (4) -> 2
        // l=1: A col nnz = 1 (3), B row nnz = 1 (5) -> 1
        assert_eq!(c.mult_nonzero, 3);
    }

    #[test]
    fn softmax_rows_normalises() {
        let mut m = Mat::from_rows(1, 3, vec![1.0, 2.0, 3.0]);
        m.softmax_rows(1.0);
        let s: f64 = m.data.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(m.at(0, 2) > m.at(0, 1) && m.at(0, 1) > m.at(0, 0));
    }
}
