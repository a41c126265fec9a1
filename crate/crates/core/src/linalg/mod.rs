//! Dense linear-algebra kernel.
//!
//! Everything is row-major `f64` storage. The routines here are sized for
//! desk-scale problems (a few thousand unknowns) and favour contiguous row
//! access in their inner loops.

mod cholesky;
mod eig;
mod lu;
mod ortho;
mod saddle;
mod svd;

pub use cholesky::{cholesky, Cholesky};
pub use eig::{
    generalized_eig, generalized_eigenvalues, inverse_iteration_lowest, sym_eig, EigPairs,
};
pub use lu::lu_solve;
pub use ortho::{orthonormalize, orthonormalize_against, InnerProduct};
pub use saddle::{solve_saddle, SaddleFactorization, SymIndefinite};
pub use svd::{thin_svd, Svd};

use std::ops::{Deref, Index, IndexMut};

use crate::error::{check_dim, Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
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

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix storage length", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    /// Builds a matrix from row slices; all rows must have equal length.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("row length", cols, r.as_ref().len())?;
            data.extend_from_slice(r.as_ref());
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    /// Builds an `n × columns.len()` matrix whose columns are the given vectors.
    pub fn from_columns<C: AsRef<[f64]>>(n: usize, columns: &[C]) -> Result<Self> {
        let mut m = Matrix::zeros(n, columns.len());
        for (j, c) in columns.iter().enumerate() {
            let c = c.as_ref();
            check_dim("column length", n, c.len())?;
            for (i, &v) in c.iter().enumerate() {
                m.data[i * m.cols + j] = v;
            }
        }
        Ok(m)
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Matrix::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
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

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows)
            .map(|i| self.data[i * self.cols + j])
            .collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.data[i * self.cols + j] = v;
        }
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        let t = self.transpose();
        (0..t.rows).map(|i| t.row(i).to_vec()).collect()
    }

    /// Sub-matrix made of the first `count` columns.
    pub fn leading_columns(&self, count: usize) -> Matrix {
        Matrix::from_fn(self.rows, count, |i, j| self[(i, j)])
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// `self · other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul: inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, other.row(k), out_row);
            }
        }
        out
    }

    /// `selfᵀ · other` without forming the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul: row counts differ");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for r in 0..self.rows {
            let b = other.row(r);
            for (i, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                axpy(a, b, out.row_mut(i));
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "mul_vec: dimension mismatch");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `selfᵀ · x`.
    pub fn t_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.rows, x.len(), "t_mul_vec: dimension mismatch");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy(xi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &Matrix) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        axpy(s, &other.data, &mut self.data);
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        let mut out = self.clone();
        out.add_scaled(-1.0, other);
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        norm2(&self.data)
    }

    /// Largest entrywise asymmetry `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut out = Matrix::zeros(self.rows, cols);
        for i in 0..self.rows {
            out.data[i * cols..i * cols + self.cols].copy_from_slice(self.row(i));
            out.data[i * cols + self.cols..(i + 1) * cols].copy_from_slice(other.row(i));
        }
        out
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Square symmetric matrix.
///
/// Construction checks `|a_ij − a_ji| ≤ 1e-12 · max(1, max|a|)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix(Matrix);

pub const SYMMETRY_TOL: f64 = 1e-12;

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch {
                context: "symmetric matrix must be square",
                expected: m.rows(),
                found: m.cols(),
            });
        }
        if m.rows() == 0 {
            return Err(Error::InvalidParameter(
                "matrix dimension must be positive".into(),
            ));
        }
        let asym = m.asymmetry();
        if asym > SYMMETRY_TOL * m.max_abs().max(1.0) {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        Ok(SymMatrix(m))
    }

    /// Averages `m` with its transpose. Panics if `m` is not square.
    pub fn symmetrized(m: &Matrix) -> Self {
        assert!(m.is_square());
        let n = m.rows();
        SymMatrix(Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)])))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n))
    }

    pub fn diagonal(values: &[f64]) -> Self {
        SymMatrix(Matrix::diagonal(values))
    }

    /// Builds from the lower triangle given by `f(i, j)` with `j ≤ i`.
    pub fn from_lower(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        SymMatrix(m)
    }

    pub(crate) fn from_matrix_unchecked(m: Matrix) -> Self {
        debug_assert!(m.is_square());
        SymMatrix(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// `self + s · other`.
    pub fn plus_scaled(&self, s: f64, other: &SymMatrix) -> SymMatrix {
        let mut m = self.0.clone();
        m.add_scaled(s, &other.0);
        SymMatrix(m)
    }

    /// Quadratic form `xᵀ A x`.
    pub fn quad(&self, x: &[f64]) -> f64 {
        dot(x, &self.0.mul_vec(x))
    }

    /// Bilinear form `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.0.mul_vec(y))
    }

    /// Congruence `Qᵀ A Q`, symmetrized.
    pub fn congruence(&self, q: &Matrix) -> SymMatrix {
        let aq = self.0.matmul(q);
        let r = q.t_matmul(&aq);
        SymMatrix::symmetrized(&r)
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four accumulators keep the loop vectorizable.
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `y += a · x`.
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn scale(a: &mut [f64], s: f64) {
    for v in a {
        *v *= s;
    }
}

pub fn sub_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn max_abs_vec(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `‖x‖_B = sqrt(xᵀ B x)`.
pub fn b_norm(b: &SymMatrix, x: &[f64]) -> f64 {
    b.quad(x).max(0.0).sqrt()
}
