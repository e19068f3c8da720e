//! Sequential dense kernels: Gram products, Cholesky, triangular solves,
//! Householder QR and the 2-norm.
//!
//! Everything here is a pure function of its inputs with a fixed loop order,
//! so results are bitwise reproducible run to run.

mod householder;
mod kernels;
mod matrix;
mod norm;
mod triangular;

pub use householder::{householder_qr, householder_qr_trapezoidal};
pub use kernels::{chol_factor, gram, gram_accumulate, tri_solve_right, tri_solve_transposed_left};
pub use matrix::DenseMatrix;
pub use norm::{two_norm, two_norm_inverse_upper};
pub use triangular::UpperTriangular;

/// Unit roundoff of IEEE binary64, `2^-53`.
pub const UNIT_ROUNDOFF: f64 = 1.0 / 9_007_199_254_740_992.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch, expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("{op}: matrix must be square, got {shape:?}")]
    NotSquare { op: &'static str, shape: (usize, usize) },
    /// Nonpositive pivot during Cholesky. `pivot` is 1-based.
    #[error("matrix is not symmetric positive definite (nonpositive pivot {pivot})")]
    NotSpd { pivot: usize },
    /// Zero diagonal entry in a triangular factor. `index` is 0-based.
    #[error("triangular factor is singular (zero diagonal at {index})")]
    Singular { index: usize },
    #[error("rank-deficient: {rows} rows cannot yield {cols} independent columns")]
    RankDeficient { rows: usize, cols: usize },
    #[error("matrix has nonzero entries below the diagonal")]
    NotUpperTriangular,
    #[error("{op}: produced non-finite values")]
    NonFinite { op: &'static str },
}
