//! Shared inputs for the criterion benchmarks.

use blockgs_core::harness::{gen_matrix, MatrixSpec};
use blockgs_core::DenseMatrix;

/// Rows, columns and block width of the default benchmark input.
pub const SHAPE: (usize, usize, usize) = (4096, 64, 4);

/// A well-conditioned input every variant factors without breakdown.
pub fn fixture(n: usize, m: usize, s: usize) -> DenseMatrix {
    gen_matrix(&MatrixSpec::geometric(n, m, s, 1e3, 42)).expect("fixture spec is valid")
}
