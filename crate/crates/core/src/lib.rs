//! Parametric Ritz methods for affine generalized eigenvalue problems
//! `A(σ) x = λ M x`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod correction;
pub mod error;
pub mod experiment;
pub mod fem;
pub mod interp;
pub mod linalg;
pub mod mmio;
pub mod pencil;
pub mod ritz;

pub use error::{Error, Result};

/// Scientific notation with 17 significant digits.
pub(crate) fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
