#![allow(dead_code)]

use pritz::linalg::{sym_eig, Matrix, SymMatrix};
use pritz::pencil::AffineOperator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `GGᵀ/n + shift·I`.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> SymMatrix {
    let g = random_matrix(rng, n, n);
    let mut a = g.matmul(&g.transpose()).scaled(1.0 / n as f64);
    for i in 0..n {
        a.row_mut(i)[i] += shift;
    }
    SymMatrix::symmetrized(&a)
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> SymMatrix {
    SymMatrix::symmetrized(&random_matrix(rng, n, n))
}

/// `A(σ)` with `A₀ ≥ I` and `Σ ‖Aₘ‖ ≤ spread`, so that `A(σ) ≥ (1 − spread) I`
/// on `[−1, 1]^d`.
pub fn random_pencil(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    spread: f64,
) -> (AffineOperator, SymMatrix) {
    let a0 = random_spd(rng, n, 1.0);
    let terms = (0..d)
        .map(|_| {
            let t = random_sym(rng, n);
            let ev = sym_eig(&t).unwrap().values;
            let r = ev[0].abs().max(ev[n - 1].abs());
            SymMatrix::symmetrized(&t.as_matrix().scaled(spread / (d as f64 * r)))
        })
        .collect();
    let mass = random_spd(rng, n, 0.5);
    (AffineOperator::new(a0, terms).unwrap(), mass)
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}
