use super::{DenseMatrix, LinalgError, UpperTriangular};

pub(crate) fn norm2(x: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let ssq: f64 = x.iter().map(|v| (v / scale) * (v / scale)).sum();
    scale * ssq.sqrt()
}

/// Householder QR of an `r x c` matrix with `k = min(r, c)`.
///
/// Returns `Q` (`r x k`, orthonormal columns) and the upper-trapezoidal `R`
/// (`k x c`) with a nonnegative diagonal. Reflectors whose subcolumn is
/// already zero are skipped, so an input that is already upper triangular
/// with a nonnegative diagonal comes back unchanged with `Q = I`.
pub fn householder_qr_trapezoidal(x: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let (r, c) = x.shape();
    let k = r.min(c);
    let mut a = x.clone();
    let mut taus = vec![0.0; k];

    for j in 0..k {
        let alpha = a[(j, j)];
        let xnorm = norm2(&a.col(j)[j + 1..]);
        if xnorm == 0.0 {
            continue;
        }
        let beta = -alpha.signum() * alpha.hypot(xnorm);
        let tau = (beta - alpha) / beta;
        let inv = 1.0 / (alpha - beta);
        for v in &mut a.col_mut(j)[j + 1..] {
            *v *= inv;
        }
        a[(j, j)] = beta;
        taus[j] = tau;
        for l in j + 1..c {
            apply_reflector(&mut a, j, l, tau, j);
        }
    }

    let mut q = DenseMatrix::from_fn(r, k, |i, j| if i == j { 1.0 } else { 0.0 });
    for j in (0..k).rev() {
        if taus[j] == 0.0 {
            continue;
        }
        let v: Vec<f64> = a.col(j)[j..].to_vec();
        for l in j..k {
            let col = &mut q.col_mut(l)[j..];
            let mut w = col[0];
            for (ci, vi) in col[1..].iter().zip(&v[1..]) {
                w += vi * ci;
            }
            w *= taus[j];
            col[0] -= w;
            for (ci, vi) in col[1..].iter_mut().zip(&v[1..]) {
                *ci -= w * vi;
            }
        }
    }

    let mut rr = DenseMatrix::from_fn(k, c, |i, j| if i <= j { a[(i, j)] } else { 0.0 });
    for j in 0..k {
        if rr[(j, j)] < 0.0 {
            for l in j..c {
                rr[(j, l)] = -rr[(j, l)];
            }
            for v in q.col_mut(j) {
                *v = -*v;
            }
        }
    }
    (q, rr)
}

/// Applies reflector `j` (stored below the diagonal of column `j`, unit
/// leading entry) to column `l` of `a`, rows `start..`.
fn apply_reflector(a: &mut DenseMatrix, j: usize, l: usize, tau: f64, start: usize) {
    let rows = a.rows();
    let (left, right) = a.as_mut_slice().split_at_mut(l * rows);
    let v = &left[j * rows + start..(j + 1) * rows];
    let col = &mut right[start..rows];
    let mut w = col[0];
    for (ci, vi) in col[1..].iter().zip(&v[1..]) {
        w += vi * ci;
    }
    w *= tau;
    col[0] -= w;
    for (ci, vi) in col[1..].iter_mut().zip(&v[1..]) {
        *ci -= w * vi;
    }
}

/// Economic Householder QR of a tall matrix: `X = Q R`, `Q` is
/// `rows x cols` with orthonormal columns and `R` has a nonnegative diagonal.
pub fn householder_qr(x: &DenseMatrix) -> Result<(DenseMatrix, UpperTriangular), LinalgError> {
    if x.rows() < x.cols() {
        return Err(LinalgError::RankDeficient {
            rows: x.rows(),
            cols: x.cols(),
        });
    }
    let (q, r) = householder_qr_trapezoidal(x);
    let r = UpperTriangular::try_from_dense(r, x.cols().max(1))?;
    Ok((q, r))
}
