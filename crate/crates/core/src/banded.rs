//! Banded matrices and their LU factorization without pivoting.
//!
//! The factorization is only ever applied to M-matrices of the form
//! `I - s·L` and `I - s·L/2`, which are strictly diagonally dominant; no
//! pivoting is needed and the triangular factors keep the M-matrix sign
//! pattern, so forward and back substitution on nonnegative data never
//! cancel.

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        Self {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    pub fn identity(n: usize, lower: usize, upper: usize) -> Self {
        let mut m = Self::zeros(n, lower, upper);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.lower, self.upper)
    }

    fn width(&self) -> usize {
        self.lower + self.upper + 1
    }

    pub fn in_band(&self, row: usize, col: usize) -> bool {
        col + self.lower >= row && col <= row + self.upper && row < self.n && col < self.n
    }

    #[inline]
    fn offset(&self, row: usize, col: usize) -> usize {
        row * self.width() + col + self.lower - row
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.in_band(row, col) {
            self.data[self.offset(row, col)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(self.in_band(row, col), "({row}, {col}) outside the band");
        let k = self.offset(row, col);
        self.data[k] = value;
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(self.in_band(row, col), "({row}, {col}) outside the band");
        let k = self.offset(row, col);
        self.data[k] += value;
    }

    /// Column range of the band in `row`.
    #[inline]
    pub fn row_span(&self, row: usize) -> std::ops::Range<usize> {
        row.saturating_sub(self.lower)..(row + self.upper + 1).min(self.n)
    }

    /// `alpha·I + beta·self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        let mut m = self.clone();
        m.data.iter_mut().for_each(|x| *x *= beta);
        for i in 0..self.n {
            m.add(i, i, alpha);
        }
        m
    }

    /// `out = self · x`.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        for (row, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self
                .row_span(row)
                .map(|col| self.data[self.offset(row, col)] * x[col])
                .sum();
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    /// `selfᵀ · x`.
    pub fn mul_vec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &xr) in x.iter().enumerate().take(self.n) {
            for col in self.row_span(row) {
                out[col] += self.data[self.offset(row, col)] * xr;
            }
        }
        out
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// In-place LU factorization. Fails if a pivot is non-finite or smaller
    /// than `min_pivot` times the magnitude of the original diagonal entry.
    pub fn factor(&self, min_pivot: f64) -> Result<BandLu> {
        let mut lu = self.clone();
        let n = self.n;
        for k in 0..n {
            let pivot = lu.get(k, k);
            let scale = self.get(k, k).abs().max(f64::MIN_POSITIVE);
            if !pivot.is_finite() || pivot.abs() <= min_pivot * scale {
                return Err(Error::LinearSolve { row: k, pivot });
            }
            let row_end = (k + self.lower + 1).min(n);
            let col_end = (k + self.upper + 1).min(n);
            for i in k + 1..row_end {
                let ik = lu.offset(i, k);
                let l = lu.data[ik] / pivot;
                lu.data[ik] = l;
                if l != 0.0 {
                    for j in k + 1..col_end {
                        let kj = lu.data[lu.offset(k, j)];
                        let ij = lu.offset(i, j);
                        lu.data[ij] -= l * kj;
                    }
                }
            }
        }
        Ok(BandLu { lu })
    }
}

/// Packed `L·U` factors (unit lower `L`).
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        for i in 0..n {
            let mut s = x[i];
            for j in i.saturating_sub(m.lower)..i {
                s -= m.data[m.offset(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..(i + m.upper + 1).min(n) {
                s -= m.data[m.offset(i, j)] * x[j];
            }
            x[i] = s / m.data[m.offset(i, i)];
        }
    }

    /// Solves `Aᵀ x = b` in place.
    pub fn solve_transpose_in_place(&self, x: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        // Uᵀ z = b
        for j in 0..n {
            let mut s = x[j];
            for i in j.saturating_sub(m.upper)..j {
                s -= m.data[m.offset(i, j)] * x[i];
            }
            x[j] = s / m.data[m.offset(j, j)];
        }
        // Lᵀ x = z
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..(i + m.lower + 1).min(n) {
                s -= m.data[m.offset(j, i)] * x[j];
            }
            x[i] = s;
        }
    }
}
