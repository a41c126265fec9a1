use super::{axpy, dot, Matrix, SymMatrix};
use crate::error::{check_dim, Error, Result};

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Matrix,
}

/// Factors an SPD matrix. Fails with `NotPositiveDefinite` on the first
/// non-positive pivot.
pub fn cholesky(m: &SymMatrix) -> Result<Cholesky> {
    let n = m.n();
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s = dot(&l.row(i)[..j], &l.row(j)[..j]);
            let v = m[(i, j)] - s;
            if i == j {
                if !(v > 0.0) {
                    return Err(Error::NotPositiveDefinite { pivot: i, value: v });
                }
                l[(i, i)] = v.sqrt();
            } else {
                l[(i, j)] = v / l[(j, j)];
            }
        }
    }
    Ok(Cholesky { l })
}

impl Cholesky {
    pub fn factor(&self) -> &Matrix {
        &self.l
    }

    pub fn into_factor(self) -> Matrix {
        self.l
    }

    pub fn n(&self) -> usize {
        self.l.rows()
    }

    /// Solves `L y = b`.
    pub fn forward(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y = b.to_vec();
        for i in 0..n {
            let s = dot(&self.l.row(i)[..i], &y[..i]);
            y[i] = (y[i] - s) / self.l[(i, i)];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    pub fn backward(&self, y: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut x = y.to_vec();
        for i in (0..n).rev() {
            x[i] /= self.l[(i, i)];
            let xi = x[i];
            // column i of Lᵀ above the diagonal is row i of L left of it
            axpy(-xi, &self.l.row(i)[..i], &mut x[..i]);
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim("cholesky solve rhs", self.n(), b.len())?;
        Ok(self.backward(&self.forward(b)))
    }

    /// `L⁻¹ X` computed row by row.
    pub fn forward_matrix(&self, x: &Matrix) -> Matrix {
        let n = self.n();
        assert_eq!(x.rows(), n);
        let mut y = x.clone();
        let cols = x.cols();
        for i in 0..n {
            let (done, rest) = y.data_mut().split_at_mut(i * cols);
            let row_i = &mut rest[..cols];
            for (k, &lik) in self.l.row(i)[..i].iter().enumerate() {
                if lik != 0.0 {
                    axpy(-lik, &done[k * cols..(k + 1) * cols], row_i);
                }
            }
            let d = 1.0 / self.l[(i, i)];
            for v in row_i.iter_mut() {
                *v *= d;
            }
        }
        y
    }

    /// `L⁻ᵀ Y` computed row by row.
    pub fn backward_matrix(&self, y: &Matrix) -> Matrix {
        let n = self.n();
        assert_eq!(y.rows(), n);
        let mut x = y.clone();
        let cols = y.cols();
        for i in (0..n).rev() {
            let d = 1.0 / self.l[(i, i)];
            {
                let row_i = x.row_mut(i);
                for v in row_i.iter_mut() {
                    *v *= d;
                }
            }
            // x_k -= L[i][k] x_i for k < i
            let (head, tail) = x.data_mut().split_at_mut(i * cols);
            let row_i = &tail[..cols];
            for (k, &lik) in self.l.row(i)[..i].iter().enumerate() {
                if lik != 0.0 {
                    axpy(-lik, row_i, &mut head[k * cols..(k + 1) * cols]);
                }
            }
        }
        x
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.n()).map(|i| 2.0 * self.l[(i, i)].ln()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::*;

    #[test]
    fn identity_factor_is_identity() {
        let c = cholesky(&SymMatrix::identity(4)).unwrap();
        assert_eq!(c.factor(), &Matrix::identity(4));
    }

    #[test]
    fn two_by_two_hand_factorization() {
        let m = SymMatrix::new(Matrix::from_rows(&[[4.0, 2.0], [2.0, 3.0]]).unwrap()).unwrap();
        let l = cholesky(&m).unwrap().into_factor();
        let expected = Matrix::from_rows(&[[2.0, 0.0], [1.0, 2f64.sqrt()]]).unwrap();
        assert!(l.sub(&expected).max_abs() < 1e-15);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let m = SymMatrix::new(Matrix::from_rows(&[[1.0, 2.0], [2.0, 1.0]]).unwrap()).unwrap();
        assert!(matches!(
            cholesky(&m),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn reproduces_random_spd() {
        let mut rng = rng(11);
        let a = random_spd(&mut rng, 30);
        let c = cholesky(&a).unwrap();
        let l = c.factor();
        let llt = l.matmul(&l.transpose());
        assert!(llt.sub(&a).max_abs() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn triangular_solves_match_vector_and_matrix_forms() {
        let mut rng = rng(12);
        let a = random_spd(&mut rng, 12);
        let c = cholesky(&a).unwrap();
        let b = random_matrix(&mut rng, 12, 3);
        let fm = c.forward_matrix(&b);
        let bm = c.backward_matrix(&b);
        for j in 0..3 {
            let col = b.column(j);
            let f = c.forward(&col);
            let g = c.backward(&col);
            for i in 0..12 {
                assert!((fm[(i, j)] - f[i]).abs() < 1e-12);
                assert!((bm[(i, j)] - g[i]).abs() < 1e-12);
            }
        }
        let x = c.solve(&b.column(0)).unwrap();
        let r = a.mul_vec(&x);
        for i in 0..12 {
            assert!((r[i] - b[(i, 0)]).abs() < 1e-10);
        }
    }
}
