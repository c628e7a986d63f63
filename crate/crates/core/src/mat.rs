//! Minimal dense row-major matrix used by the spectral and classifier code.
//!
//! The matrices here are small (n x n with n <= a few hundred), so a plain
//! `Vec<T>` with index arithmetic beats pulling in a linear-algebra crate,
//! and it keeps the Jacobi eigensolver self-contained.

use crate::real::Real;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|` (square matrices).
    pub fn max_asymmetry(&self) -> T {
        debug_assert_eq!(self.rows, self.cols);
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `out[j][c] = sum_i m[i][j] * pts[i][c]` — transposed matrix times a
/// three-column point block.
pub fn transpose_mul_points<T: Real>(m: &Mat<T>, pts: &[[T; 3]]) -> Vec<[T; 3]> {
    assert_eq!(m.rows(), pts.len(), "dimension mismatch");
    let n = m.rows();
    let mut out = vec![[T::zero(); 3]; m.cols()];
    for i in 0..n {
        let row = m.row(i);
        let p = pts[i];
        for (j, &q) in row.iter().enumerate() {
            out[j][0] = out[j][0] + q * p[0];
            out[j][1] = out[j][1] + q * p[1];
            out[j][2] = out[j][2] + q * p[2];
        }
    }
    out
}

/// `out[i][c] = sum_j m[i][j] * pts[j][c]` — matrix times a three-column
/// point block.
pub fn mul_points<T: Real>(m: &Mat<T>, pts: &[[T; 3]]) -> Vec<[T; 3]> {
    assert_eq!(m.cols(), pts.len(), "dimension mismatch");
    let n = m.rows();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = m.row(i);
        let mut acc = [T::zero(); 3];
        for (j, &q) in row.iter().enumerate() {
            let p = pts[j];
            acc[0] = acc[0] + q * p[0];
            acc[1] = acc[1] + q * p[1];
            acc[2] = acc[2] + q * p[2];
        }
        out.push(acc);
    }
    out
}
