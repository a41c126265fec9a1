//! The correction operator `Z(σ, t)`, which maps the average-basis part of
//! an eigenvector to its complement part: `x = x̄ + Z(σ, λ) x̄`.
//!
//! With `W⊥` spanning the `Ā`-orthogonal complement of `span(W)`,
//!
//! `Z(σ, t) = −W⊥ (W⊥ᵀ (A(σ) − tM) W⊥)⁻¹ W⊥ᵀ δA(σ)`, `δA(σ) = A(σ) − Ā`.
//!
//! The practical path never forms `W⊥`; it solves the bordered system
//! `[[A(σ) − tM, ĀW], [WᵀĀ, 0]] [r; γ] = [−δA(σ) b; 0]`.

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    b_norm, generalized_eig, lu_solve, norm2, sub_vec, Matrix, SaddleFactorization, SymMatrix,
};
use crate::pencil::{AffineOperator, SpectralBasis, SpectralEquivalence};

/// Largest problem for which the explicit-complement oracle is allowed.
pub const ORACLE_MAX_N: usize = 2000;

/// Relative residual above which `(λ, x)` is not accepted as an eigenpair.
pub const EIGENPAIR_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct CorrectionContext {
    pub op: AffineOperator,
    pub mass: SymMatrix,
    pub basis: SpectralBasis,
    pub equivalence: SpectralEquivalence,
    /// Target endpoint `Λ`; the basis covers `[0, ρΛ)`.
    pub lambda: f64,
    abar_w: Matrix,
}

impl CorrectionContext {
    pub fn new(
        op: AffineOperator,
        mass: SymMatrix,
        basis: SpectralBasis,
        equivalence: SpectralEquivalence,
        lambda: f64,
    ) -> Result<Self> {
        let n = op.n();
        check_dim("mass matrix dimension", n, mass.n())?;
        check_dim("spectral basis rows", n, basis.w.rows())?;
        check_dim("average matrix dimension", n, equivalence.abar.n())?;
        if !(lambda > 0.0) || lambda > basis.rho_lambda {
            return Err(Error::InvalidParameter(format!(
                "target endpoint {lambda} must lie in (0, {}]",
                basis.rho_lambda
            )));
        }
        let abar_w = equivalence.abar.matmul(&basis.w);
        Ok(CorrectionContext {
            op,
            mass,
            basis,
            equivalence,
            lambda,
            abar_w,
        })
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    /// `ρ = ρΛ / Λ`.
    pub fn rho(&self) -> f64 {
        self.basis.rho_lambda / self.lambda
    }

    /// The constraint block `ĀW`.
    pub fn abar_w(&self) -> &Matrix {
        &self.abar_w
    }

    fn shifted(&self, sigma: &[f64], t: f64) -> Result<SymMatrix> {
        Ok(self.op.evaluate(sigma)?.plus_scaled(-t, &self.mass))
    }

    /// `Z(σ, t) b`.
    pub fn apply_z(&self, sigma: &[f64], t: f64, b: &[f64]) -> Result<Vec<f64>> {
        check_dim("correction input length", self.n(), b.len())?;
        let block = self.apply_z_block(sigma, t, &Matrix::from_columns(self.n(), &[b])?)?;
        Ok(block.column(0))
    }

    /// `Z(σ, t) B` with one factorization for all columns.
    pub fn apply_z_block(&self, sigma: &[f64], t: f64, b: &Matrix) -> Result<Matrix> {
        check_dim("correction block rows", self.n(), b.rows())?;
        let delta = self.op.delta_against(sigma, &self.equivalence.abar)?;
        let rhs = delta.matmul(b).scaled(-1.0);
        let mut out = Matrix::zeros(self.n(), b.cols());
        if rhs.max_abs() == 0.0 {
            return Ok(out);
        }
        let fac = SaddleFactorization::new(&self.shifted(sigma, t)?, &self.abar_w)
            .map_err(|e| e.context(format!("saddle system at sigma = {sigma:?}, t = {t}")))?;
        for j in 0..b.cols() {
            let (r, _gamma) = fac.solve(&rhs.column(j))?;
            out.set_column(j, &r);
        }
        Ok(out)
    }

    /// `Z(σ, t) b` through an explicit complement basis. Dense and slow.
    pub fn oracle_z(&self, sigma: &[f64], t: f64, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        if n > ORACLE_MAX_N {
            return Err(Error::InvalidParameter(format!(
                "explicit complement oracle limited to n <= {ORACLE_MAX_N}, got {n}"
            )));
        }
        check_dim("correction input length", n, b.len())?;
        let pairs = generalized_eig(&self.equivalence.abar, &self.mass)?;
        let rl = self.basis.rho_lambda;
        let wp = pairs.select(|_, v| v >= rl).vectors;
        let delta = self.op.delta_against(sigma, &self.equivalence.abar)?;
        let g = wp.t_mul_vec(&delta.mul_vec(b));
        if g.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; n]);
        }
        let k = self.shifted(sigma, t)?;
        let kp = wp.t_matmul(&k.matmul(&wp));
        let c = lu_solve(&kp, &g)?;
        Ok(wp.mul_vec(&c).iter().map(|v| -v).collect())
    }

    /// Splits an eigenvector into `x̄ = W WᵀM x` and the remainder `x − x̄`.
    ///
    /// `span(W)` is invariant for `(Ā, M)`, so the `M`-projection used here
    /// coincides with the `Ā`-orthogonal one.
    pub fn split_eigenvector(
        &self,
        sigma: &[f64],
        lambda: f64,
        x: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim("eigenvector length", self.n(), x.len())?;
        let ax = self.op.evaluate(sigma)?.mul_vec(x);
        let mx = self.mass.mul_vec(x);
        let res: Vec<f64> = ax.iter().zip(&mx).map(|(a, m)| a - lambda * m).collect();
        let residual = norm2(&res);
        if residual > EIGENPAIR_TOL * norm2(&ax) {
            return Err(Error::NotAnEigenpair { residual });
        }
        let w = &self.basis.w;
        let xbar = w.mul_vec(&w.t_mul_vec(&mx));
        let rest = sub_vec(x, &xbar);
        Ok((xbar, rest))
    }

    /// `‖x − x̄ − Z(σ, λ) x̄‖_M / ‖x‖_M` for an eigenpair.
    pub fn reconstruction_error(&self, sigma: &[f64], lambda: f64, x: &[f64]) -> Result<f64> {
        let (xbar, rest) = self.split_eigenvector(sigma, lambda, x)?;
        let z = self.apply_z(sigma, lambda, &xbar)?;
        Ok(b_norm(&self.mass, &sub_vec(&rest, &z)) / b_norm(&self.mass, x))
    }

    /// `ρ/(ρ−1) · (βρΛ)^{1/2}`, bounding `‖Z(σ,t) y‖_{A(σ)}` over
    /// `y ∈ span(W)`, `‖y‖_M ≤ 1`.
    pub fn z_norm_bound(&self, lambda: f64) -> Result<f64> {
        z_norm_bound(
            self.basis.rho_lambda,
            lambda,
            self.equivalence.alpha,
            self.equivalence.beta,
        )
    }
}

pub fn z_norm_bound(rho_lambda: f64, lambda: f64, alpha: f64, beta: f64) -> Result<f64> {
    let rho = rho_lambda / lambda;
    if !(rho > 1.0) {
        return Err(Error::PreconditionViolated(format!(
            "rho = {rho} must exceed 1"
        )));
    }
    if !(alpha * rho > 1.0) {
        return Err(Error::PreconditionViolated(format!(
            "alpha * rho = {} must exceed 1",
            alpha * rho
        )));
    }
    Ok(rho / (rho - 1.0) * (beta * rho_lambda).sqrt())
}
