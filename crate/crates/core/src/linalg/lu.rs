use super::Matrix;
use crate::error::{check_dim, Error, Result};

/// Solves `A x = b` by LU with partial pivoting.
///
/// Used as a reference solver in tests and for small dense systems whose
/// definiteness is unknown.
pub fn lu_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    check_dim("lu_solve: matrix must be square", n, a.cols())?;
    check_dim("lu_solve: rhs length", n, b.len())?;
    let scale = a.max_abs();
    let mut lu = a.clone();
    let mut x = b.to_vec();
    for k in 0..n {
        let (p, pmax) = (k..n)
            .map(|i| (i, lu[(i, k)].abs()))
            .fold((k, -1.0), |best, c| if c.1 > best.1 { c } else { best });
        if pmax <= f64::EPSILON * scale * n as f64 || pmax == 0.0 {
            return Err(Error::SingularSystem { step: k });
        }
        if p != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = t;
            }
            x.swap(k, p);
        }
        let pivot = lu[(k, k)];
        let cols = n;
        let (top, bottom) = lu.data_mut().split_at_mut((k + 1) * cols);
        let row_k = &top[k * cols..];
        for i in (k + 1)..n {
            let row_i = &mut bottom[(i - k - 1) * cols..(i - k) * cols];
            let l = row_i[k] / pivot;
            if l == 0.0 {
                continue;
            }
            row_i[k] = l;
            for j in (k + 1)..n {
                row_i[j] -= l * row_k[j];
            }
            x[i] -= l * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for j in (i + 1)..n {
            s -= lu[(i, j)] * x[j];
        }
        x[i] = s / lu[(i, i)];
    }
    Ok(x)
}
