//! Symmetric and generalized symmetric-definite eigensolvers.
//!
//! The pencil `(A, M)` is reduced to the standard problem `L⁻¹ A L⁻ᵀ` through
//! the Cholesky factor of `M`, tridiagonalized by Householder reflections and
//! diagonalized by implicit QL iteration.

use super::{axpy, cholesky, dot, norm2, Matrix, SymMatrix};
use crate::error::{check_dim, Error, Result};

const QL_MAX_ITER: usize = 60;

/// Eigenvalues in non-decreasing order with matching column eigenvectors.
#[derive(Clone, Debug)]
pub struct EigPairs {
    pub values: Vec<f64>,
    /// `n × values.len()`, column `k` pairs with `values[k]`.
    pub vectors: Matrix,
}

impl EigPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// Keeps the pairs whose index satisfies `keep`.
    pub fn select(&self, mut keep: impl FnMut(usize, f64) -> bool) -> EigPairs {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&k| keep(k, self.values[k]))
            .collect();
        let n = self.vectors.rows();
        EigPairs {
            values: idx.iter().map(|&k| self.values[k]).collect(),
            vectors: Matrix::from_fn(n, idx.len(), |i, j| self.vectors[(i, idx[j])]),
        }
    }
}

struct Tridiagonal {
    diag: Vec<f64>,
    /// `off[i]` couples `i` and `i + 1`; `off[n − 1] = 0`.
    off: Vec<f64>,
}

/// Householder reduction of a full symmetric matrix stored in `a`.
///
/// Returns the tridiagonal and, when requested, the transposed orthogonal
/// factor `Qᵀ` with `A = Q T Qᵀ`.
fn tridiagonalize(mut a: Matrix, want_q: bool) -> (Tridiagonal, Option<Matrix>) {
    let n = a.rows();
    let mut off = vec![0.0; n];
    let mut reflectors: Vec<Option<(Vec<f64>, f64)>> = Vec::new();
    for k in 0..n.saturating_sub(2) {
        let x = a.row(k)[k + 1..].to_vec();
        let sigma = norm2(&x);
        if sigma == 0.0 {
            off[k] = 0.0;
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] > 0.0 { -sigma } else { sigma };
        let mut v = x;
        v[0] -= alpha;
        let beta = 2.0 / dot(&v, &v);
        let m = n - k - 1;
        let mut p = vec![0.0; m];
        for (i, pi) in p.iter_mut().enumerate() {
            *pi = beta * dot(&a.row(k + 1 + i)[k + 1..], &v);
        }
        let kk = 0.5 * beta * dot(&p, &v);
        let w: Vec<f64> = p.iter().zip(&v).map(|(pi, vi)| pi - kk * vi).collect();
        for i in 0..m {
            let (vi, wi) = (v[i], w[i]);
            let row = &mut a.row_mut(k + 1 + i)[k + 1..];
            for j in 0..m {
                row[j] -= vi * w[j] + wi * v[j];
            }
        }
        off[k] = alpha;
        reflectors.push(if want_q { Some((v, beta)) } else { None });
    }
    if n >= 2 {
        off[n - 2] = a[(n - 2, n - 1)];
    }
    let diag: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();

    let qt = if want_q {
        // backward accumulation of Q = H_0 H_1 ⋯ H_{n−3}
        let mut q = Matrix::identity(n);
        for (k, r) in reflectors.iter().enumerate().rev() {
            let Some((v, beta)) = r else { continue };
            let m = n - k - 1;
            let mut u = vec![0.0; m];
            for i in 0..m {
                if v[i] != 0.0 {
                    axpy(v[i], &q.row(k + 1 + i)[k + 1..], &mut u);
                }
            }
            for i in 0..m {
                let s = -beta * v[i];
                if s != 0.0 {
                    axpy(s, &u, &mut q.row_mut(k + 1 + i)[k + 1..]);
                }
            }
        }
        Some(q.transpose())
    } else {
        None
    };
    (Tridiagonal { diag, off }, qt)
}

/// Implicit QL on a symmetric tridiagonal. Rotations are applied to the rows
/// of `zt` (the transposed eigenvector matrix) when present.
fn tridiagonal_ql(t: &mut Tridiagonal, mut zt: Option<&mut Matrix>) -> Result<()> {
    let n = t.diag.len();
    let d = &mut t.diag;
    let e = &mut t.off;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > QL_MAX_ITER {
                return Err(Error::ConvergenceFailure { iterations: iter });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = zt.as_deref_mut() {
                    let cols = z.cols();
                    let (lo, hi) = z.data_mut().split_at_mut((i + 1) * cols);
                    let zi = &mut lo[i * cols..];
                    let zi1 = &mut hi[..cols];
                    for (a, b) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let h = *b;
                        *b = s * *a + c * h;
                        *a = c * *a - s * h;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Largest-magnitude component positive; ties resolved by lowest index.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = -1.0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if best_abs > 0.0 && v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Full eigendecomposition of a symmetric matrix: `A = V diag(λ) Vᵀ`.
pub fn sym_eig(a: &SymMatrix) -> Result<EigPairs> {
    let n = a.n();
    let (mut t, qt) = tridiagonalize(a.as_matrix().clone(), true);
    let mut zt = qt.expect("requested");
    tridiagonal_ql(&mut t, Some(&mut zt))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| t.diag[i].total_cmp(&t.diag[j]));
    let values: Vec<f64> = order.iter().map(|&i| t.diag[i]).collect();
    let mut rows = Matrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        let dst = rows.row_mut(k);
        dst.copy_from_slice(zt.row(i));
        fix_sign(dst);
    }
    Ok(EigPairs {
        values,
        vectors: rows.transpose(),
    })
}

fn sym_eigenvalues(a: Matrix) -> Result<Vec<f64>> {
    let (mut t, _) = tridiagonalize(a, false);
    tridiagonal_ql(&mut t, None)?;
    let mut v = t.diag;
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `L⁻¹ A L⁻ᵀ` for the Cholesky factor of `m`.
fn reduce_pencil(a: &SymMatrix, chol: &super::Cholesky) -> Matrix {
    let x = chol.forward_matrix(a.as_matrix());
    let c = chol.forward_matrix(&x.transpose());
    SymMatrix::symmetrized(&c).into_matrix()
}

/// Solves `A v = λ M v` for the full spectrum with M-orthonormal vectors.
pub fn generalized_eig(a: &SymMatrix, m: &SymMatrix) -> Result<EigPairs> {
    check_dim("generalized_eig: pencil dimensions", a.n(), m.n())?;
    let chol = cholesky(m)?;
    let c = SymMatrix::from_matrix_unchecked(reduce_pencil(a, &chol));
    let std = sym_eig(&c)?;
    let mut vectors = chol.backward_matrix(&std.vectors);
    let n = a.n();
    // back-transformed columns need the sign convention re-applied
    let mut cols = vectors.transpose();
    for k in 0..n {
        fix_sign(cols.row_mut(k));
    }
    vectors = cols.transpose();
    Ok(EigPairs {
        values: std.values,
        vectors,
    })
}

/// Eigenvalues only of the pencil `(A, M)`, ascending.
pub fn generalized_eigenvalues(a: &SymMatrix, m: &SymMatrix) -> Result<Vec<f64>> {
    check_dim("generalized_eigenvalues: pencil dimensions", a.n(), m.n())?;
    let chol = cholesky(m)?;
    sym_eigenvalues(reduce_pencil(a, &chol))
}

/// Lowest eigenpair of an SPD pencil by inverse iteration.
///
/// Starts from the all-ones vector, so it targets problems whose lowest mode
/// is not orthogonal to it (e.g. Dirichlet Laplacians).
pub fn inverse_iteration_lowest(
    a: &SymMatrix,
    m: &SymMatrix,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    check_dim("inverse_iteration: pencil dimensions", a.n(), m.n())?;
    let chol = cholesky(a)?;
    let n = a.n();
    let mut x = vec![1.0; n];
    let mut lambda = f64::INFINITY;
    for it in 0..max_iter {
        let mx = m.mul_vec(&x);
        let mut y = chol.solve(&mx)?;
        let my = m.mul_vec(&y);
        let nrm = dot(&y, &my).sqrt();
        for v in &mut y {
            *v /= nrm;
        }
        let next = a.quad(&y) / m.quad(&y);
        x = y;
        if (next - lambda).abs() <= 1e-15 * next.abs() && it > 2 {
            return Ok((next, x));
        }
        lambda = next;
    }
    Err(Error::ConvergenceFailure {
        iterations: max_iter,
    })
}
