//! Affine parametric operators, spectral equivalence and the average-matrix
//! spectral basis.

use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{generalized_eig, generalized_eigenvalues, EigPairs, Matrix, SymMatrix};

/// Relative distance below which an eigenvalue counts as sitting on the
/// sampling endpoint.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// `A(σ) = A₀ + Σ σₘ Aₘ`.
#[derive(Clone, Debug)]
pub struct AffineOperator {
    a0: SymMatrix,
    terms: Vec<SymMatrix>,
}

impl AffineOperator {
    pub fn new(a0: SymMatrix, terms: Vec<SymMatrix>) -> Result<Self> {
        for t in &terms {
            check_dim("affine term dimension", a0.n(), t.n())?;
        }
        Ok(AffineOperator { a0, terms })
    }

    pub fn n(&self) -> usize {
        self.a0.n()
    }

    /// Number of parameters.
    pub fn d(&self) -> usize {
        self.terms.len()
    }

    pub fn a0(&self) -> &SymMatrix {
        &self.a0
    }

    pub fn terms(&self) -> &[SymMatrix] {
        &self.terms
    }

    /// `A(σ)`.
    pub fn evaluate(&self, sigma: &[f64]) -> Result<SymMatrix> {
        check_dim("parameter vector length", self.d(), sigma.len())?;
        let mut m = self.a0.as_matrix().clone();
        for (s, t) in sigma.iter().zip(&self.terms) {
            if *s != 0.0 {
                m.add_scaled(*s, t);
            }
        }
        Ok(SymMatrix::from_matrix_unchecked(m))
    }

    /// `δA(σ) = A(σ) − A₀`.
    pub fn delta(&self, sigma: &[f64]) -> Result<SymMatrix> {
        check_dim("parameter vector length", self.d(), sigma.len())?;
        let mut m = Matrix::zeros(self.n(), self.n());
        for (s, t) in sigma.iter().zip(&self.terms) {
            if *s != 0.0 {
                m.add_scaled(*s, t);
            }
        }
        Ok(SymMatrix::from_matrix_unchecked(m))
    }

    /// `A(σ) − Ā` for a caller-supplied average matrix.
    pub fn delta_against(&self, sigma: &[f64], abar: &SymMatrix) -> Result<SymMatrix> {
        check_dim("average matrix dimension", self.n(), abar.n())?;
        let mut m = self.evaluate(sigma)?.into_matrix();
        m.add_scaled(-1.0, abar);
        Ok(SymMatrix::from_matrix_unchecked(m))
    }
}

/// Closed interval `[lo, hi]`.
pub type Interval = (f64, f64);

/// Builds the box `[lo, hi]^d`.
pub fn uniform_box(d: usize, interval: Interval) -> Vec<Interval> {
    vec![interval; d]
}

/// Constants with `α vᵀĀv ≤ vᵀA(σ)v ≤ β vᵀĀv` over a parameter box.
#[derive(Clone, Debug)]
pub struct SpectralEquivalence {
    pub alpha: f64,
    pub beta: f64,
    pub abar: SymMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStyle {
    /// `α = 1 − Σ κₘ rₘ`, `β = 1 + Σ κₘ rₘ` with `rₘ = max|σₘ|` on the box.
    /// Missing `κ` are computed as `max |eig(Aₘ, A₀)|`.
    CoefficientBounds { kappa: Option<Vec<f64>> },
    /// Extremal eigenvalues of `(A(σ), A₀)` over the box vertices.
    ///
    /// Exact for affine operators: the Rayleigh quotient ratio is affine in `σ`
    /// for fixed `v`, so its extremes sit at vertices.
    VertexSampling,
}

impl SpectralEquivalence {
    pub fn new(alpha: f64, beta: f64, abar: SymMatrix) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::NotSpectrallyEquivalent { alpha });
        }
        if beta < alpha {
            return Err(Error::InvalidParameter(format!(
                "equivalence constants out of order: alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(SpectralEquivalence { alpha, beta, abar })
    }
}

/// Largest `|eig(Aₘ, A₀)|`, the sharp bound on `|vᵀAₘv| / vᵀA₀v`.
pub fn coefficient_bound(term: &SymMatrix, a0: &SymMatrix) -> Result<f64> {
    let ev = generalized_eigenvalues(term, a0)?;
    Ok(ev
        .first()
        .map_or(0.0, |v| v.abs())
        .max(ev.last().map_or(0.0, |v| v.abs())))
}

pub fn equivalence_from_box(
    op: &AffineOperator,
    bx: &[Interval],
    style: &BoundStyle,
) -> Result<SpectralEquivalence> {
    check_dim("parameter box dimension", op.d(), bx.len())?;
    let abar = op.a0().clone();
    let (alpha, beta) = match style {
        BoundStyle::CoefficientBounds { kappa } => {
            let kappa = match kappa {
                Some(k) => {
                    check_dim("kappa length", op.d(), k.len())?;
                    k.clone()
                }
                None => op
                    .terms()
                    .iter()
                    .map(|t| coefficient_bound(t, &abar))
                    .collect::<Result<_>>()?,
            };
            let spread: f64 = kappa
                .iter()
                .zip(bx)
                .map(|(k, (lo, hi))| k.abs() * lo.abs().max(hi.abs()))
                .sum();
            (1.0 - spread, 1.0 + spread)
        }
        BoundStyle::VertexSampling => {
            let d = op.d();
            if d > 20 {
                return Err(Error::InvalidParameter(format!(
                    "vertex sampling needs 2^d solves; d = {d} is too large"
                )));
            }
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for mask in 0..(1usize << d) {
                let sigma: Vec<f64> = (0..d)
                    .map(|m| if mask >> m & 1 == 1 { bx[m].1 } else { bx[m].0 })
                    .collect();
                let ev = generalized_eigenvalues(&op.evaluate(&sigma)?, &abar)?;
                lo = lo.min(ev[0]);
                hi = hi.max(ev[ev.len() - 1]);
            }
            (lo, hi)
        }
    };
    SpectralEquivalence::new(alpha, beta, abar)
}

/// `α λᵢ(0) ≤ λᵢ(σ) ≤ β λᵢ(0)` for every `i`, with `1e-10` relative slack.
pub fn envelope_check(eq: &SpectralEquivalence, at_zero: &[f64], at_sigma: &[f64]) -> bool {
    const SLACK: f64 = 1e-10;
    at_zero.len() == at_sigma.len()
        && at_zero.iter().zip(at_sigma).all(|(&l0, &ls)| {
            let tol = SLACK * l0.abs().max(ls.abs());
            eq.alpha * l0 - tol <= ls && ls <= eq.beta * l0 + tol
        })
}

/// Guaranteed relative gap of the perturbed problem, if any.
pub fn gap_bound(delta0: f64, alpha: f64, beta: f64) -> Option<f64> {
    if delta0 > (beta - alpha) / alpha {
        Some((alpha * delta0 + (alpha - beta)) / beta)
    } else {
        None
    }
}

/// M-orthonormal eigenvectors of `(Ā, M)` with eigenvalues below `ρΛ`.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub w: Matrix,
    pub values: Vec<f64>,
    pub rho_lambda: f64,
}

impl SpectralBasis {
    pub fn m(&self) -> usize {
        self.w.cols()
    }
}

pub fn spectral_basis(
    abar: &SymMatrix,
    mass: &SymMatrix,
    rho_lambda: f64,
) -> Result<SpectralBasis> {
    spectral_basis_from_pairs(&generalized_eig(abar, mass)?, rho_lambda)
}

/// As [`spectral_basis`], reusing a full eigendecomposition of `(Ā, M)`.
pub fn spectral_basis_from_pairs(pairs: &EigPairs, rho_lambda: f64) -> Result<SpectralBasis> {
    if !(rho_lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sampling endpoint must be positive, got {rho_lambda}"
        )));
    }
    if let Some(&v) = pairs
        .values
        .iter()
        .find(|&&v| ((v - rho_lambda) / rho_lambda).abs() < BOUNDARY_TOL)
    {
        return Err(Error::BoundaryEigenvalue {
            eigenvalue: v,
            rho_lambda,
        });
    }
    let kept = pairs.select(|_, v| v < rho_lambda);
    if kept.is_empty() {
        return Err(Error::EmptyBasis { rho_lambda });
    }
    Ok(SpectralBasis {
        w: kept.vectors,
        values: kept.values,
        rho_lambda,
    })
}

/// Endpoint placed midway between the `m`-th and `(m+1)`-th eigenvalue, so
/// the basis has exactly `m` columns.
pub fn rho_lambda_for_size(values: &[f64], m: usize) -> Result<f64> {
    if m == 0 || m >= values.len() {
        return Err(Error::InvalidParameter(format!(
            "basis size {m} must lie in 1..{}",
            values.len()
        )));
    }
    let (a, b) = (values[m - 1], values[m]);
    if (b - a) <= BOUNDARY_TOL * b.abs() {
        return Err(Error::InvalidParameter(format!(
            "eigenvalues {m} and {} coincide; no endpoint separates them",
            m + 1
        )));
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::testutil::*;
    use rand::Rng;

    fn random_op(rng: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize) -> AffineOperator {
        let terms = (0..d).map(|_| random_sym(rng, n)).collect();
        AffineOperator::new(random_spd(rng, n), terms).unwrap()
    }

    #[test]
    fn evaluate_at_zero_is_a0() {
        let mut rng = rng(61);
        let op = random_op(&mut rng, 5, 2);
        assert_eq!(&op.evaluate(&[0.0, 0.0]).unwrap(), op.a0());
        assert_eq!(op.delta(&[0.0, 0.0]).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn single_term_unit_parameter() {
        let mut rng = rng(62);
        let op = random_op(&mut rng, 4, 1);
        let expected = op.a0().plus_scaled(1.0, &op.terms()[0]);
        assert_eq!(op.evaluate(&[1.0]).unwrap(), expected);
        let s = 0.37;
        assert!(
            op.delta(&[s])
                .unwrap()
                .sub(&op.terms()[0].scaled(s))
                .max_abs()
                < 1e-15
        );
    }

    #[test]
    fn evaluate_matches_direct_summation() {
        let mut rng = rng(63);
        let op = random_op(&mut rng, 6, 3);
        let sigma: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut sum = Matrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                sum[(i, j)] = (0..3).map(|m| sigma[m] * op.terms()[m][(i, j)]).sum();
            }
        }
        let diff = op.evaluate(&sigma).unwrap().sub(op.a0());
        assert!(diff.sub(&sum).max_abs() < 1e-14);
        let back = op.delta(&sigma).unwrap().plus_scaled(1.0, op.a0());
        assert!(back.sub(&op.evaluate(&sigma).unwrap()).max_abs() < 1e-14);
    }

    #[test]
    fn wrong_parameter_length_is_rejected() {
        let mut rng = rng(64);
        let op = random_op(&mut rng, 3, 2);
        assert!(matches!(
            op.evaluate(&[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            op.delta(&[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn no_terms_gives_unit_constants() {
        let mut rng = rng(65);
        let op = random_op(&mut rng, 4, 0);
        for style in [
            BoundStyle::CoefficientBounds { kappa: None },
            BoundStyle::VertexSampling,
        ] {
            let eq = equivalence_from_box(&op, &[], &style).unwrap();
            assert!((eq.alpha - 1.0).abs() < 1e-12 && (eq.beta - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_term_gives_exact_constants() {
        let mut rng = rng(66);
        let a0 = random_spd(&mut rng, 7);
        let op =
            AffineOperator::new(a0.clone(), vec![SymMatrix::symmetrized(&a0.scaled(0.3))]).unwrap();
        for style in [
            BoundStyle::CoefficientBounds { kappa: None },
            BoundStyle::VertexSampling,
        ] {
            let eq = equivalence_from_box(&op, &[(-1.0, 1.0)], &style).unwrap();
            assert!((eq.alpha - 0.7).abs() < 1e-10, "{style:?}: {}", eq.alpha);
            assert!((eq.beta - 1.3).abs() < 1e-10);
        }
    }

    #[test]
    fn oversized_box_is_rejected() {
        let mut rng = rng(67);
        let a0 = random_spd(&mut rng, 4);
        let op = AffineOperator::new(a0.clone(), vec![a0.clone()]).unwrap();
        let r = equivalence_from_box(
            &op,
            &[(-2.0, 2.0)],
            &BoundStyle::CoefficientBounds { kappa: None },
        );
        assert!(matches!(r, Err(Error::NotSpectrallyEquivalent { .. })));
    }

    #[test]
    fn envelope_cases() {
        let eq = SpectralEquivalence::new(0.8, 1.2, SymMatrix::identity(1)).unwrap();
        let l0 = vec![1.0, 2.0, 5.0];
        assert!(envelope_check(&eq, &l0, &l0));
        let breach: Vec<f64> = l0.iter().map(|v| (eq.beta + 1.0) * v).collect();
        assert!(!envelope_check(&eq, &l0, &breach));
        let low: Vec<f64> = l0.iter().map(|v| 0.5 * v).collect();
        assert!(!envelope_check(&eq, &l0, &low));
    }

    #[test]
    fn envelope_holds_on_random_pencils() {
        let mut rng = rng(68);
        let n = 10;
        let a0 = random_spd(&mut rng, n);
        let mass = random_spd(&mut rng, n);
        let t = random_sym(&mut rng, n);
        let kappa = coefficient_bound(&t, &a0).unwrap();
        let t = SymMatrix::symmetrized(&t.scaled(0.4 / kappa));
        let op = AffineOperator::new(a0.clone(), vec![t]).unwrap();
        let eq = equivalence_from_box(
            &op,
            &[(-1.0, 1.0)],
            &BoundStyle::CoefficientBounds { kappa: None },
        )
        .unwrap();
        let l0 = generalized_eigenvalues(&a0, &mass).unwrap();
        for _ in 0..20 {
            let s = rng.gen_range(-1.0..1.0);
            let ls = generalized_eigenvalues(&op.evaluate(&[s]).unwrap(), &mass).unwrap();
            assert!(envelope_check(&eq, &l0, &ls));
        }
    }

    #[test]
    fn gap_bound_cases() {
        assert_eq!(gap_bound(0.3, 1.0, 1.0), Some(0.3));
        let (a, b) = (0.5, 1.5);
        assert_eq!(gap_bound((b - a) / a, a, b), None);
        let g = gap_bound(0.5, 0.9, 1.1).unwrap();
        assert!((g - 0.25 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn diagonal_selection() {
        let abar = SymMatrix::diagonal(&[1.0, 2.0, 10.0]);
        let b = spectral_basis(&abar, &SymMatrix::identity(3), 5.0).unwrap();
        assert_eq!(b.m(), 2);
        assert_eq!(b.values, vec![1.0, 2.0]);
        assert!(matches!(
            spectral_basis(&abar, &SymMatrix::identity(3), 0.5),
            Err(Error::EmptyBasis { .. })
        ));
        assert!(matches!(
            spectral_basis(&abar, &SymMatrix::identity(3), 2.0 * (1.0 + 1e-12)),
            Err(Error::BoundaryEigenvalue { .. })
        ));
    }

    #[test]
    fn complement_is_coercive() {
        let mut rng = rng(69);
        let n = 12;
        let abar = random_spd(&mut rng, n);
        let mass = random_spd(&mut rng, n);
        let ev = generalized_eigenvalues(&abar, &mass).unwrap();
        let rl = 0.5 * (ev[3] + ev[4]);
        let b = spectral_basis(&abar, &mass, rl).unwrap();
        assert_eq!(b.m(), 4);
        for _ in 0..50 {
            let mut v = random_vec(&mut rng, n);
            let c = b.w.t_mul_vec(&mass.mul_vec(&v));
            let proj = b.w.mul_vec(&c);
            for (x, p) in v.iter_mut().zip(&proj) {
                *x -= p;
            }
            let lhs = abar.quad(&v);
            let rhs = rl * mass.quad(&v);
            assert!(lhs >= rhs - 1e-8 * lhs.abs().max(1.0));
        }
    }

    #[test]
    fn size_targeted_endpoint() {
        let v = [1.0, 2.0, 4.0, 4.0, 7.0];
        assert_eq!(rho_lambda_for_size(&v, 2).unwrap(), 3.0);
        assert!(rho_lambda_for_size(&v, 3).is_err());
    }
}
