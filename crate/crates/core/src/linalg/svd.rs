use super::{dot, norm2, Matrix};

/// Thin singular value decomposition `B = U diag(s) Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × r` with orthonormal columns, `r = min(rows, cols)`.
    pub u: Matrix,
    /// Descending, non-negative.
    pub s: Vec<f64>,
    /// `cols × r` with orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, sj) in self.s.iter().enumerate() {
                us[(i, j)] *= sj;
            }
        }
        us.matmul(&self.v.transpose())
    }
}

const JACOBI_SWEEPS: usize = 60;

/// One-sided Jacobi SVD on the columns of the tall orientation of `b`.
pub fn thin_svd(b: &Matrix) -> Svd {
    if b.rows() < b.cols() {
        let t = thin_svd(&b.transpose());
        return Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        };
    }
    let (n, m) = (b.rows(), b.cols());
    // columns stored as contiguous rows
    let mut a = b.transpose();
    let mut v = Matrix::identity(m);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                let alpha = dot(a.row(p), a.row(p));
                let beta = dot(a.row(q), a.row(q));
                let gamma = dot(a.row(p), a.row(q));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..m).map(|j| norm2(a.row(j))).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let scale = s.first().copied().unwrap_or(0.0);

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut v_cols: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &j in &order {
        let vj = v.row(j).to_vec();
        v_cols.push(vj);
        let nj = norms[j];
        if nj > 0.0 && nj > scale * 1e-300 {
            u_cols.push(a.row(j).iter().map(|x| x / nj).collect());
        } else {
            u_cols.push(vec![0.0; n]);
        }
    }
    // columns belonging to exactly-zero singular values get an orthonormal completion
    complete_zero_columns(&mut u_cols, &s, n);
    Svd {
        u: Matrix::from_columns(n, &u_cols).expect("column length"),
        s,
        v: Matrix::from_columns(m, &v_cols).expect("column length"),
    }
}

fn rotate_rows(a: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = a.cols();
    let (lo, hi) = a.data_mut().split_at_mut(q * cols);
    let rp = &mut lo[p * cols..(p + 1) * cols];
    let rq = &mut hi[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

fn complete_zero_columns(cols: &mut [Vec<f64>], s: &[f64], n: usize) {
    let mut candidate = 0usize;
    for j in 0..cols.len() {
        if s[j] > 0.0 {
            continue;
        }
        while candidate < n {
            let mut e = vec![0.0; n];
            e[candidate] = 1.0;
            candidate += 1;
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == j || (s[k] == 0.0 && k > j) {
                        continue;
                    }
                    let h = dot(c, &e);
                    for (ei, ci) in e.iter_mut().zip(c) {
                        *ei -= h * ci;
                    }
                }
            }
            let nrm = norm2(&e);
            if nrm > 0.5 {
                cols[j] = e.iter().map(|x| x / nrm).collect();
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::*;
    use crate::linalg::{generalized_eigenvalues, orthonormalize, SymMatrix};

    fn orthonormal_columns(m: &Matrix, tol: f64) -> bool {
        m.t_matmul(m).sub(&Matrix::identity(m.cols())).max_abs() <= tol
    }

    #[test]
    fn zero_matrix_has_zero_singular_values() {
        let svd = thin_svd(&Matrix::zeros(6, 3));
        assert_eq!(svd.s, vec![0.0; 3]);
        assert!(orthonormal_columns(&svd.u, 1e-14));
        assert!(orthonormal_columns(&svd.v, 1e-14));
    }

    #[test]
    fn isometry_has_unit_singular_values() {
        let mut rng = rng(20);
        let q = orthonormalize(&random_matrix(&mut rng, 12, 5).columns(), None);
        let svd = thin_svd(&q);
        for s in svd.s {
            assert!((s - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn random_reconstruction() {
        let mut rng = rng(21);
        let b = random_matrix(&mut rng, 20, 5);
        let svd = thin_svd(&b);
        let err = svd.reconstruct().sub(&b).max_abs();
        assert!(err <= 1e-10 * b.frobenius_norm());
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(orthonormal_columns(&svd.u, 1e-12));
        assert!(orthonormal_columns(&svd.v, 1e-12));
    }

    #[test]
    fn wide_input_and_rank_deficiency() {
        let mut rng = rng(22);
        let mut b = random_matrix(&mut rng, 4, 9);
        // duplicate a row: rank 3
        for j in 0..9 {
            b[(3, j)] = b[(0, j)];
        }
        let svd = thin_svd(&b);
        assert_eq!(svd.s.len(), 4);
        assert!(svd.s[3] < 1e-12 * svd.s[0]);
        assert!(svd.reconstruct().sub(&b).max_abs() < 1e-12);
        assert!(orthonormal_columns(&svd.u, 1e-12));
    }

    #[test]
    fn singular_values_are_roots_of_gram_eigenvalues() {
        let mut rng = rng(23);
        for _ in 0..5 {
            let b = random_matrix(&mut rng, 10, 4);
            let svd = thin_svd(&b);
            let gram = SymMatrix::symmetrized(&b.t_matmul(&b));
            let mut ev = generalized_eigenvalues(&gram, &SymMatrix::identity(4)).unwrap();
            ev.reverse();
            for (s, l) in svd.s.iter().zip(ev) {
                assert!((s - l.sqrt()).abs() <= 1e-8 * s);
            }
        }
    }
}
