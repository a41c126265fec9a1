//! Ritz subspaces built from the average-matrix basis and correction
//! samples, the reduced eigenproblem on them, and error measurement.

use rayon::prelude::*;
use serde::Serialize;

use crate::correction::CorrectionContext;
use crate::error::{check_dim, Error, Result};
use crate::fmt17;
use crate::interp::CLGrid;
use crate::linalg::{
    cholesky, generalized_eig, generalized_eigenvalues, orthonormalize, orthonormalize_against,
    sym_eig, thin_svd, Matrix, SymMatrix,
};
use crate::pencil::AffineOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rmcli,
    RmcliReduced,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmcli" => Ok(Method::Rmcli),
            "rmcli_reduced" | "rmcli-reduced" => Ok(Method::RmcliReduced),
            other => Err(Error::InvalidParameter(format!("unknown method `{other}`"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Rmcli => "rmcli",
            Method::RmcliReduced => "rmcli_reduced",
        })
    }
}

/// Euclidean-orthonormal basis of the Ritz subspace.
#[derive(Clone, Debug)]
pub struct RitzBasis {
    pub q: Matrix,
    pub method: Method,
    /// Singular value cutoff, reduced method only.
    pub tol: Option<f64>,
    /// Columns of the embedded average-matrix basis.
    pub m: usize,
    /// `m · (1 + n_pairs)`: everything offered before orthogonalization.
    pub pre_orth_columns: usize,
    pub n_pairs: usize,
}

impl RitzBasis {
    pub fn dim(&self) -> usize {
        self.q.cols()
    }
}

fn sample_blocks(ctx: &CorrectionContext, grid: &CLGrid) -> Result<Vec<Matrix>> {
    check_dim("collocation grid dimension", ctx.op.d(), grid.d())?;
    grid.pairs()
        .par_iter()
        .map(|&(i, j)| ctx.apply_z_block(&grid.sigma_points[i], grid.t_nodes[j], &ctx.basis.w))
        .collect()
}

/// `W` followed by every sample block `Z(σᵢ, tⱼ) W`, orthonormalized.
pub fn build_rmcli(ctx: &CorrectionContext, grid: &CLGrid) -> Result<RitzBasis> {
    let m = ctx.basis.m();
    let mut cols = ctx.basis.w.columns();
    for blk in sample_blocks(ctx, grid)? {
        cols.extend(blk.columns());
    }
    let pre = cols.len();
    Ok(RitzBasis {
        q: orthonormalize(&cols, None),
        method: Method::Rmcli,
        tol: None,
        m,
        pre_orth_columns: pre,
        n_pairs: grid.n_pairs(),
    })
}

/// Appends, per grid pair in order, the left singular vectors of
/// `(I − QQᵀ) Z(σᵢ, tⱼ) W` whose singular value exceeds `tol`.
pub fn build_rmcli_reduced(ctx: &CorrectionContext, grid: &CLGrid, tol: f64) -> Result<RitzBasis> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reduction tolerance must be positive, got {tol}"
        )));
    }
    let m = ctx.basis.m();
    let n = ctx.n();
    let mut q = orthonormalize(&ctx.basis.w.columns(), None);
    let blocks = if tol.is_finite() {
        sample_blocks(ctx, grid)?
    } else {
        Vec::new()
    };
    for blk in blocks {
        let mut r = blk.clone();
        r.add_scaled(-1.0, &q.matmul(&q.t_matmul(&blk)));
        let svd = thin_svd(&r);
        let keep: Vec<Vec<f64>> = (0..svd.s.len())
            .filter(|&k| svd.s[k] > tol)
            .map(|k| svd.u.column(k))
            .collect();
        if keep.is_empty() {
            continue;
        }
        let new = orthonormalize_against(&q, &keep, None);
        if !new.is_empty() {
            q = q.hcat(&Matrix::from_columns(n, &new)?);
        }
    }
    Ok(RitzBasis {
        q,
        method: Method::RmcliReduced,
        tol: Some(tol),
        m,
        pre_orth_columns: m * (1 + grid.n_pairs()),
        n_pairs: grid.n_pairs(),
    })
}

pub fn build_basis(
    ctx: &CorrectionContext,
    grid: &CLGrid,
    method: Method,
    tol: f64,
) -> Result<RitzBasis> {
    match method {
        Method::Rmcli => build_rmcli(ctx, grid),
        Method::RmcliReduced => build_rmcli_reduced(ctx, grid, tol),
    }
}

/// The pencil projected once onto a fixed basis: `QᵀAₘQ` and `QᵀMQ`.
#[derive(Clone, Debug)]
pub struct ReducedPencil {
    pub a0: SymMatrix,
    pub terms: Vec<SymMatrix>,
    pub mass: SymMatrix,
}

#[derive(Clone, Debug)]
pub struct RitzSolution {
    pub values: Vec<f64>,
    /// Coefficients in the basis, one column per value.
    pub coefficients: Matrix,
}

impl RitzSolution {
    /// Ritz vectors `Q y` in the full space.
    pub fn vectors(&self, basis: &RitzBasis) -> Matrix {
        basis.q.matmul(&self.coefficients)
    }
}

impl ReducedPencil {
    pub fn new(q: &Matrix, op: &AffineOperator, mass: &SymMatrix) -> Result<Self> {
        check_dim("Ritz basis rows", op.n(), q.rows())?;
        check_dim("mass matrix dimension", op.n(), mass.n())?;
        let mass_r = mass.congruence(q);
        cholesky(&mass_r).map_err(|e| e.context("reduced mass matrix"))?;
        Ok(ReducedPencil {
            a0: op.a0().congruence(q),
            terms: op.terms().iter().map(|t| t.congruence(q)).collect(),
            mass: mass_r,
        })
    }

    pub fn k(&self) -> usize {
        self.a0.n()
    }

    fn evaluate(&self, sigma: &[f64]) -> Result<SymMatrix> {
        check_dim("parameter vector length", self.terms.len(), sigma.len())?;
        let mut a = self.a0.clone();
        for (s, t) in sigma.iter().zip(&self.terms) {
            a = a.plus_scaled(*s, t);
        }
        Ok(a)
    }

    fn check_count(&self, count: usize) -> Result<()> {
        if count > self.k() {
            return Err(Error::InvalidParameter(format!(
                "requested {count} Ritz values from a basis of dimension {}",
                self.k()
            )));
        }
        Ok(())
    }

    /// The smallest `count` Ritz values at `σ`.
    pub fn values(&self, sigma: &[f64], count: usize) -> Result<Vec<f64>> {
        self.check_count(count)?;
        let mut v = generalized_eigenvalues(&self.evaluate(sigma)?, &self.mass)?;
        v.truncate(count);
        Ok(v)
    }

    pub fn solve(&self, sigma: &[f64], count: usize) -> Result<RitzSolution> {
        self.check_count(count)?;
        let pairs = generalized_eig(&self.evaluate(sigma)?, &self.mass)?;
        Ok(RitzSolution {
            values: pairs.values[..count].to_vec(),
            coefficients: pairs.vectors.leading_columns(count),
        })
    }
}

/// Smallest `count` Ritz values and coefficient vectors of
/// `QᵀA(σ)Q y = μ QᵀMQ y`.
pub fn ritz_solve(
    basis: &RitzBasis,
    op: &AffineOperator,
    mass: &SymMatrix,
    sigma: &[f64],
    count: usize,
) -> Result<RitzSolution> {
    ReducedPencil::new(&basis.q, op, mass)?.solve(sigma, count)
}

/// Reference eigenvalues from full dense solves, one row per σ sample.
#[derive(Clone, Debug, Serialize)]
pub struct ReferenceSpectra {
    pub samples: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

/// Largest problem solved densely for reference values.
pub const REFERENCE_MAX_N: usize = 2000;

impl ReferenceSpectra {
    pub fn compute(
        op: &AffineOperator,
        mass: &SymMatrix,
        samples: &[Vec<f64>],
        count: usize,
    ) -> Result<Self> {
        if op.n() > REFERENCE_MAX_N {
            return Err(Error::InvalidParameter(format!(
                "dense reference solves limited to n <= {REFERENCE_MAX_N}, got {}",
                op.n()
            )));
        }
        if count > op.n() {
            return Err(Error::InvalidParameter(format!(
                "requested {count} eigenvalues of an n = {} pencil",
                op.n()
            )));
        }
        let values = samples
            .par_iter()
            .map(|s| {
                let mut v = generalized_eigenvalues(&op.evaluate(s)?, mass)?;
                v.truncate(count);
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReferenceSpectra {
            samples: samples.to_vec(),
            values,
        })
    }

    pub fn count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub method: Method,
    pub sigma_samples: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    /// `(μₖ − λₖ) / λₖ` per sample and `k`.
    pub errors: Vec<Vec<f64>>,
    pub max_per_sample: Vec<f64>,
    pub global_max: f64,
    pub pre_orth_columns: usize,
    pub dim: usize,
}

pub fn error_report(
    basis: &RitzBasis,
    op: &AffineOperator,
    mass: &SymMatrix,
    reference: &ReferenceSpectra,
) -> Result<ErrorReport> {
    let count = reference.count();
    let pencil = ReducedPencil::new(&basis.q, op, mass)?;
    let mu = reference
        .samples
        .par_iter()
        .map(|s| pencil.values(s, count))
        .collect::<Result<Vec<_>>>()?;
    let errors: Vec<Vec<f64>> = reference
        .values
        .iter()
        .zip(&mu)
        .map(|(l, m)| l.iter().zip(m).map(|(l, m)| (m - l) / l).collect())
        .collect();
    let max_per_sample: Vec<f64> = errors
        .iter()
        .map(|e| e.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let global_max = max_per_sample
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ErrorReport {
        method: basis.method,
        sigma_samples: reference.samples.clone(),
        lambda: reference.values.clone(),
        mu,
        errors,
        max_per_sample,
        global_max,
        pre_orth_columns: basis.pre_orth_columns,
        dim: basis.dim(),
    })
}

impl ErrorReport {
    /// One row per `(σ, k)`.
    pub fn to_csv(&self) -> String {
        let d = self.sigma_samples.first().map_or(0, Vec::len);
        let mut s = String::from("sample");
        for m in 1..=d {
            s.push_str(&format!(",sigma_{m}"));
        }
        s.push_str(",k,lambda,mu,rel_error\n");
        for (i, sigma) in self.sigma_samples.iter().enumerate() {
            for k in 0..self.lambda[i].len() {
                s.push_str(&i.to_string());
                for &v in sigma {
                    s.push(',');
                    s.push_str(&fmt17(v));
                }
                s.push_str(&format!(
                    ",{},{},{},{}\n",
                    k + 1,
                    fmt17(self.lambda[i][k]),
                    fmt17(self.mu[i][k]),
                    fmt17(self.errors[i][k])
                ));
            }
        }
        s
    }

    pub fn min_error(&self) -> f64 {
        self.errors
            .iter()
            .flatten()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }
}

/// Per-eigenvalue quantities entering the subspace error bound.
#[derive(Clone, Debug, Serialize)]
pub struct BoundTerm {
    pub k: usize,
    pub lambda: f64,
    pub mu: f64,
    pub rel_error: f64,
    /// `e(λₖ, V)`: worst relative `M`-norm projection defect on `E_{≤λₖ}`.
    pub e_k: f64,
    /// `max ‖(I − P)x‖²_{A(σ)}` over `x ∈ E_{≤λₖ}`, `‖x‖_{A(σ)} = 1`.
    pub residual_sq: f64,
    /// `(1 − e²)⁻¹ · residual_sq`.
    pub bound: f64,
    /// `(1 − e)⁻² · residual_sq`.
    pub bound_loose: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SubspaceErrorTerms {
    /// `e(σ, V)` over the eigenvectors with eigenvalue below `Λ`.
    pub e: f64,
    /// Per-eigenvector `‖(I − P)xᵢ‖_{A(σ)}` with `‖xᵢ‖_{A(σ)} = 1`.
    pub residuals: Vec<f64>,
    pub terms: Vec<BoundTerm>,
}

impl SubspaceErrorTerms {
    pub fn bound_holds(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.rel_error <= t.bound * (1.0 + 1e-8) + 1e-13)
    }

    pub fn loose_bound_holds(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.rel_error <= t.bound_loose * (1.0 + 1e-8) + 1e-13)
    }
}

fn top_eigenvalue(g: &Matrix) -> Result<f64> {
    let v = sym_eig(&SymMatrix::symmetrized(g))?.values;
    Ok(v.last().copied().unwrap_or(0.0).max(0.0))
}

/// Projection defects of the exact eigenvectors below `Λ` with respect to
/// the `A(σ)`-orthogonal projection onto the Ritz space.
pub fn subspace_error_terms(
    basis: &RitzBasis,
    op: &AffineOperator,
    mass: &SymMatrix,
    sigma: &[f64],
    lambda: f64,
) -> Result<SubspaceErrorTerms> {
    if op.n() > REFERENCE_MAX_N {
        return Err(Error::InvalidParameter(format!(
            "dense reference solves limited to n <= {REFERENCE_MAX_N}, got {}",
            op.n()
        )));
    }
    let a = op.evaluate(sigma)?;
    let pairs = generalized_eig(&a, mass)?;
    let below = pairs.values.iter().take_while(|&&v| v < lambda).count();
    if below == 0 {
        return Ok(SubspaceErrorTerms {
            e: 0.0,
            residuals: Vec::new(),
            terms: Vec::new(),
        });
    }
    let x = pairs.vectors.leading_columns(below);
    let q = &basis.q;
    let aq = a.matmul(q);
    let qaq = SymMatrix::symmetrized(&q.t_matmul(&aq));
    let chol = cholesky(&qaq).map_err(|e| e.context("reduced stiffness"))?;
    // P x = Q (QᵀAQ)⁻¹ QᵀA x
    let rhs = aq.t_matmul(&x);
    let coef = chol.backward_matrix(&chol.forward_matrix(&rhs));
    let mut r = x.clone();
    r.add_scaled(-1.0, &q.matmul(&coef));
    // x is M-orthonormal; A-normalized columns are xᵢ/√λᵢ
    let ar = a.matmul(&r);
    let mr = mass.matmul(&r);
    let ga = r.t_matmul(&ar);
    let gm = r.t_matmul(&mr);
    let scale: Vec<f64> = pairs.values[..below]
        .iter()
        .map(|l| 1.0 / l.sqrt())
        .collect();
    let ga_unit = Matrix::from_fn(below, below, |i, j| ga[(i, j)] * scale[i] * scale[j]);
    let residuals = (0..below)
        .map(|i| ga_unit[(i, i)].max(0.0).sqrt())
        .collect();
    let e = top_eigenvalue(&gm)?.sqrt();
    let reduced = ReducedPencil::new(q, op, mass)?;
    let mu = reduced.values(sigma, below.min(reduced.k()))?;
    let mut terms = Vec::new();
    for k in 0..mu.len() {
        let lk = pairs.values[k];
        // E_{≤λₖ} includes every eigenvalue tied with λₖ
        let top = pairs.values[..below]
            .iter()
            .take_while(|&&v| v <= lk * (1.0 + 1e-10))
            .count();
        let sub = |g: &Matrix| Matrix::from_fn(top, top, |i, j| g[(i, j)]);
        let e_k = top_eigenvalue(&sub(&gm))?.sqrt();
        let residual_sq = top_eigenvalue(&sub(&ga_unit))?;
        let rel_error = (mu[k] - lk) / lk;
        let (bound, bound_loose) = if e_k < 1.0 {
            (
                residual_sq / (1.0 - e_k * e_k),
                residual_sq / ((1.0 - e_k) * (1.0 - e_k)),
            )
        } else {
            (f64::INFINITY, f64::INFINITY)
        };
        terms.push(BoundTerm {
            k: k + 1,
            lambda: lk,
            mu: mu[k],
            rel_error,
            e_k,
            residual_sq,
            bound,
            bound_loose,
        });
    }
    Ok(SubspaceErrorTerms {
        e,
        residuals,
        terms,
    })
}
