use serde::Serialize;

use crate::dense::{gram, householder_qr, two_norm, two_norm_inverse_upper, DenseMatrix};
use crate::error::Error;

/// `‖Q^T Q - I‖₂`.
pub fn loss_of_orthogonality(q: &DenseMatrix) -> f64 {
    let g = gram(q, q).expect("Q^T Q of a single matrix always conforms");
    two_norm(&g.sub(&DenseMatrix::identity(q.cols())).expect("square"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub value: f64,
    /// Set when `X = 0`, in which case `value` is the absolute `‖QR‖_F`.
    pub absolute: bool,
}

/// `‖X - QR‖_F / ‖X‖_F`.
pub fn residual(x: &DenseMatrix, q: &DenseMatrix, r: &DenseMatrix) -> Result<Residual, Error> {
    let qr = q.matmul(r)?;
    let diff = x.sub(&qr)?.frobenius_norm();
    let xn = x.frobenius_norm();
    Ok(if xn == 0.0 {
        Residual {
            value: qr.frobenius_norm(),
            absolute: true,
        }
    } else {
        Residual {
            value: diff / xn,
            absolute: false,
        }
    })
}

/// 2-norm condition number of a tall matrix, from its triangular factor.
pub fn condition_number(x: &DenseMatrix) -> Result<f64, Error> {
    let (_, r) = householder_qr(x)?;
    Ok(two_norm(r.as_dense()) * two_norm_inverse_upper(&r)?)
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
