//! Symmetric indefinite factorization and the block saddle-point solve
//! `[[K, C], [Cᵀ, 0]] [r; η] = [f; g]`.

use super::{axpy, Matrix, SymMatrix};
use crate::error::{check_dim, Error, Result};

/// Bunch–Kaufman pivot threshold `(1 + √17) / 8`.
const BK_ALPHA: f64 = 0.640_388_203_202_208_4;

#[derive(Clone, Copy, Debug)]
enum Pivot {
    One(usize),
    Two(usize),
}

/// `P A Pᵀ = L D Lᵀ` with unit lower `L` and 1×1 / 2×2 diagonal blocks `D`
/// (Bunch–Kaufman partial pivoting).
#[derive(Clone, Debug)]
pub struct SymIndefinite {
    /// `L` strictly below the block diagonal, `D` on it.
    f: Matrix,
    /// `swaps[k] = p` means rows/columns `k` and `p` were exchanged at step `k`.
    swaps: Vec<usize>,
    pivots: Vec<Pivot>,
}

impl SymIndefinite {
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let n = a.n();
        let mut f = a.as_matrix().clone();
        let tiny = n as f64 * f64::EPSILON * f.max_abs();
        let mut swaps: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::new();
        let mut k = 0;
        while k < n {
            let akk = f[(k, k)].abs();
            let (imax, colmax) = ((k + 1)..n)
                .map(|i| (i, f[(i, k)].abs()))
                .fold((k, 0.0), |b, c| if c.1 > b.1 { c } else { b });
            if akk.max(colmax) <= tiny {
                return Err(Error::SingularSystem { step: k });
            }
            let (kp, two) = if akk >= BK_ALPHA * colmax {
                (k, false)
            } else {
                let rowmax = (k..n)
                    .filter(|&j| j != imax)
                    .map(|j| f[(imax, j)].abs())
                    .fold(0.0, f64::max);
                if akk * rowmax >= BK_ALPHA * colmax * colmax {
                    (k, false)
                } else if f[(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    (imax, false)
                } else {
                    (imax, true)
                }
            };
            let target = if two { k + 1 } else { k };
            if kp != target {
                swap_symmetric(&mut f, target, kp, k);
            }
            swaps[target] = kp;
            if two {
                eliminate_two(&mut f, k, tiny)?;
                pivots.push(Pivot::Two(k));
                k += 2;
            } else {
                eliminate_one(&mut f, k);
                pivots.push(Pivot::One(k));
                k += 1;
            }
        }
        Ok(SymIndefinite { f, swaps, pivots })
    }

    pub fn n(&self) -> usize {
        self.f.rows()
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        check_dim("indefinite solve rhs", n, b.len())?;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.swaps[k]);
        }
        // L y = x
        for p in &self.pivots {
            match *p {
                Pivot::One(k) => {
                    let xk = x[k];
                    for i in (k + 1)..n {
                        x[i] -= self.f[(i, k)] * xk;
                    }
                }
                Pivot::Two(k) => {
                    let (x0, x1) = (x[k], x[k + 1]);
                    for i in (k + 2)..n {
                        x[i] -= self.f[(i, k)] * x0 + self.f[(i, k + 1)] * x1;
                    }
                }
            }
        }
        // D z = y
        for p in &self.pivots {
            match *p {
                Pivot::One(k) => x[k] /= self.f[(k, k)],
                Pivot::Two(k) => {
                    let (a, b, c) = (self.f[(k, k)], self.f[(k + 1, k)], self.f[(k + 1, k + 1)]);
                    let det = a * c - b * b;
                    let (y0, y1) = (x[k], x[k + 1]);
                    x[k] = (c * y0 - b * y1) / det;
                    x[k + 1] = (a * y1 - b * y0) / det;
                }
            }
        }
        // Lᵀ w = z
        for p in self.pivots.iter().rev() {
            match *p {
                Pivot::One(k) => {
                    let mut s = 0.0;
                    for i in (k + 1)..n {
                        s += self.f[(i, k)] * x[i];
                    }
                    x[k] -= s;
                }
                Pivot::Two(k) => {
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for i in (k + 2)..n {
                        s0 += self.f[(i, k)] * x[i];
                        s1 += self.f[(i, k + 1)] * x[i];
                    }
                    x[k] -= s0;
                    x[k + 1] -= s1;
                }
            }
        }
        for k in (0..n).rev() {
            x.swap(k, self.swaps[k]);
        }
        Ok(x)
    }

    /// Number of negative eigenvalues (inertia from `D`).
    pub fn negative_count(&self) -> usize {
        self.pivots
            .iter()
            .map(|p| match *p {
                Pivot::One(k) => usize::from(self.f[(k, k)] < 0.0),
                Pivot::Two(k) => {
                    let (a, b, c) = (self.f[(k, k)], self.f[(k + 1, k)], self.f[(k + 1, k + 1)]);
                    let det = a * c - b * b;
                    if det < 0.0 {
                        1
                    } else if a + c < 0.0 {
                        2
                    } else {
                        0
                    }
                }
            })
            .sum()
    }
}

/// Exchanges index `i < j` in the active trailing block and the finished
/// rows of `L`. Rows are swapped whole; columns only from `start` down.
fn swap_symmetric(f: &mut Matrix, i: usize, j: usize, start: usize) {
    let n = f.rows();
    let cols = f.cols();
    {
        let (lo, hi) = f.data_mut().split_at_mut(j * cols);
        lo[i * cols..(i + 1) * cols].swap_with_slice(&mut hi[..cols]);
    }
    for r in start..n {
        let t = f[(r, i)];
        f[(r, i)] = f[(r, j)];
        f[(r, j)] = t;
    }
}

fn eliminate_one(f: &mut Matrix, k: usize) {
    let n = f.rows();
    let d = f[(k, k)];
    let col: Vec<f64> = ((k + 1)..n).map(|i| f[(i, k)]).collect();
    let cols = f.cols();
    for (off, i) in ((k + 1)..n).enumerate() {
        let l = col[off] / d;
        let row = &mut f.data_mut()[i * cols..(i + 1) * cols];
        if l != 0.0 {
            axpy(-l, &col, &mut row[k + 1..]);
        }
        row[k] = l;
    }
}

fn eliminate_two(f: &mut Matrix, k: usize, tiny: f64) -> Result<()> {
    let n = f.rows();
    let (a, b, c) = (f[(k, k)], f[(k + 1, k)], f[(k + 1, k + 1)]);
    let det = a * c - b * b;
    if det.abs() <= tiny * b.abs() || det == 0.0 {
        return Err(Error::SingularSystem { step: k });
    }
    let c0: Vec<f64> = ((k + 2)..n).map(|i| f[(i, k)]).collect();
    let c1: Vec<f64> = ((k + 2)..n).map(|i| f[(i, k + 1)]).collect();
    let cols = f.cols();
    for (off, i) in ((k + 2)..n).enumerate() {
        // [l0 l1] = [c0 c1] D⁻¹
        let l0 = (c * c0[off] - b * c1[off]) / det;
        let l1 = (a * c1[off] - b * c0[off]) / det;
        let row = &mut f.data_mut()[i * cols..(i + 1) * cols];
        if l0 != 0.0 {
            axpy(-l0, &c0, &mut row[k + 2..]);
        }
        if l1 != 0.0 {
            axpy(-l1, &c1, &mut row[k + 2..]);
        }
        row[k] = l0;
        row[k + 1] = l1;
    }
    Ok(())
}

/// Factorization of `[[K, C], [Cᵀ, 0]]` reused across right-hand sides.
#[derive(Clone, Debug)]
pub struct SaddleFactorization {
    n: usize,
    m: usize,
    fac: Option<SymIndefinite>,
    chol: Option<super::Cholesky>,
}

impl SaddleFactorization {
    pub fn new(k: &SymMatrix, c: &Matrix) -> Result<Self> {
        let n = k.n();
        check_dim("saddle constraint rows", n, c.rows())?;
        let m = c.cols();
        if m == 0 {
            // no constraints: K itself must be invertible; try SPD first
            let chol = super::cholesky(k).ok();
            let fac = match chol {
                Some(_) => None,
                None => Some(SymIndefinite::factor(k)?),
            };
            return Ok(SaddleFactorization { n, m, fac, chol });
        }
        let big = n + m;
        let mut block = Matrix::zeros(big, big);
        for i in 0..n {
            block.row_mut(i)[..n].copy_from_slice(k.row(i));
            block.row_mut(i)[n..].copy_from_slice(c.row(i));
            for j in 0..m {
                block[(n + j, i)] = c[(i, j)];
            }
        }
        let fac = SymIndefinite::factor(&SymMatrix::from_matrix_unchecked(block))?;
        Ok(SaddleFactorization {
            n,
            m,
            fac: Some(fac),
            chol: None,
        })
    }

    pub fn constraint_count(&self) -> usize {
        self.m
    }

    /// Solves with right side `[f; g]`.
    pub fn solve_full(&self, f: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("saddle rhs length", self.n, f.len())?;
        check_dim("saddle constraint rhs length", self.m, g.len())?;
        if let Some(ch) = &self.chol {
            return Ok((ch.solve(f)?, Vec::new()));
        }
        let mut rhs = f.to_vec();
        rhs.extend_from_slice(g);
        let mut sol = self.fac.as_ref().expect("factor present").solve(&rhs)?;
        let eta = sol.split_off(self.n);
        Ok((sol, eta))
    }

    /// Solves with right side `[f; 0]`.
    pub fn solve(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.solve_full(f, &vec![0.0; self.m])
    }
}

/// One-shot solve of `[[K, C], [Cᵀ, 0]] [r; η] = [rhs; 0]`.
pub fn solve_saddle(k: &SymMatrix, c: &Matrix, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    SaddleFactorization::new(k, c)?.solve(rhs)
}
