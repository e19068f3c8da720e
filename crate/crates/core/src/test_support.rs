use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::{gram, householder_qr, two_norm, DenseMatrix};

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// `U diag(sigma) V^T` with sigma log-spaced from 1 down to `1/kappa`.
pub fn conditioned(rows: usize, cols: usize, kappa: f64, seed: u64) -> DenseMatrix {
    let (u, _) = householder_qr(&gaussian(rows, cols, seed)).unwrap();
    let (v, _) = householder_qr(&gaussian(cols, cols, seed + 1)).unwrap();
    let sigma: Vec<f64> = (0..cols)
        .map(|i| kappa.powf(-(i as f64) / ((cols - 1).max(1) as f64)))
        .collect();
    u.matmul(&DenseMatrix::diagonal(&sigma))
        .unwrap()
        .matmul(&v.transpose())
        .unwrap()
}

pub fn loo(q: &DenseMatrix) -> f64 {
    two_norm(&gram(q, q).unwrap().sub(&DenseMatrix::identity(q.cols())).unwrap())
}
