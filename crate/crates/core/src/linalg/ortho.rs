//! Modified Gram–Schmidt with conditional reorthogonalization.

use super::{axpy, dot, Matrix, SymMatrix};

/// Columns whose norm after projection falls to this fraction of the
/// original norm are treated as dependent and dropped.
pub const DROP_TOL: f64 = 1e-10;

/// A second projection pass runs when the remaining overlap with the basis
/// exceeds this fraction of the vector norm, or when the first pass removed
/// more than half of the norm.
const REORTH_TOL: f64 = 1e-8;

/// Euclidean or `B`-weighted inner product.
#[derive(Clone, Copy, Debug)]
pub enum InnerProduct<'a> {
    Euclidean,
    Weighted(&'a SymMatrix),
}

impl<'a> InnerProduct<'a> {
    pub fn new(inner: Option<&'a SymMatrix>) -> Self {
        inner.map_or(InnerProduct::Euclidean, InnerProduct::Weighted)
    }

    /// `B x`, or `x` itself for the Euclidean case.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            InnerProduct::Euclidean => x.to_vec(),
            InnerProduct::Weighted(b) => b.mul_vec(x),
        }
    }

    pub fn dot(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            InnerProduct::Euclidean => dot(x, y),
            InnerProduct::Weighted(b) => b.bilinear(x, y),
        }
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.dot(x, x).max(0.0).sqrt()
    }
}

/// Orthonormal basis accumulated column by column. Each basis vector is
/// stored together with its image under the inner-product matrix so that
/// projections cost one dot product.
struct Accumulator<'a> {
    inner: InnerProduct<'a>,
    q: Vec<Vec<f64>>,
    bq: Vec<Vec<f64>>,
}

impl<'a> Accumulator<'a> {
    fn new(inner: InnerProduct<'a>) -> Self {
        Accumulator {
            inner,
            q: Vec::new(),
            bq: Vec::new(),
        }
    }

    fn seed(&mut self, basis: &Matrix) {
        for c in basis.columns() {
            self.bq.push(self.inner.apply(&c));
            self.q.push(c);
        }
    }

    fn project_out(&self, v: &mut [f64]) -> f64 {
        let mut worst = 0.0_f64;
        for (q, bq) in self.q.iter().zip(&self.bq) {
            let h = dot(bq, v);
            worst = worst.max(h.abs());
            axpy(-h, q, v);
        }
        worst
    }

    /// Appends the normalized remainder of `v`; returns false if dropped.
    fn push(&mut self, v: &[f64]) -> bool {
        let original = self.inner.norm(v);
        if original == 0.0 || !original.is_finite() {
            return false;
        }
        let mut w = v.to_vec();
        self.project_out(&mut w);
        let mut bw = self.inner.apply(&w);
        let mut nrm = dot(&w, &bw).max(0.0).sqrt();
        if nrm <= DROP_TOL * original {
            return false;
        }
        // a large norm drop or a measurable leftover overlap triggers a second pass
        let overlap = self
            .bq
            .iter()
            .map(|bq| dot(bq, &w).abs())
            .fold(0.0, f64::max);
        if nrm < 0.5 * original || overlap > REORTH_TOL * nrm {
            self.project_out(&mut w);
            bw = self.inner.apply(&w);
            nrm = dot(&w, &bw).max(0.0).sqrt();
            if nrm <= DROP_TOL * original {
                return false;
            }
        }
        let s = 1.0 / nrm;
        self.q.push(w.iter().map(|x| x * s).collect());
        self.bq.push(bw.iter().map(|x| x * s).collect());
        true
    }
}

/// Orthonormalizes `columns` in the given inner product (Euclidean when
/// `inner` is `None`), dropping numerically dependent columns.
pub fn orthonormalize(columns: &[Vec<f64>], inner: Option<&SymMatrix>) -> Matrix {
    let n = columns.first().map_or(0, Vec::len);
    let mut acc = Accumulator::new(InnerProduct::new(inner));
    for c in columns {
        acc.push(c);
    }
    Matrix::from_columns(n, &acc.q).expect("uniform column length")
}

/// Orthonormalizes `columns` against the already orthonormal `basis` and
/// among themselves. Returns only the new columns.
pub fn orthonormalize_against(
    basis: &Matrix,
    columns: &[Vec<f64>],
    inner: Option<&SymMatrix>,
) -> Vec<Vec<f64>> {
    let mut acc = Accumulator::new(InnerProduct::new(inner));
    acc.seed(basis);
    let start = acc.q.len();
    for c in columns {
        acc.push(c);
    }
    acc.q.split_off(start)
}
