use super::{DenseMatrix, LinalgError, UpperTriangular};

/// `A^T B` with a fixed summation order (row index ascending, starting from
/// an exact zero).
pub fn gram(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let mut acc = DenseMatrix::zeros(a.cols(), b.cols());
    gram_accumulate(&mut acc, a, b)?;
    Ok(acc)
}

/// `acc += A^T B`, continuing each entry's running sum over the rows of `a`
/// and `b` in order.
///
/// Because every entry keeps one running sum, feeding consecutive row slabs
/// of the same operands through this function gives bitwise the same result
/// as a single call on the full operands.
pub fn gram_accumulate(acc: &mut DenseMatrix, a: &DenseMatrix, b: &DenseMatrix) -> Result<(), LinalgError> {
    if a.rows() != b.rows() {
        return Err(LinalgError::DimensionMismatch {
            op: "gram",
            expected: (a.rows(), b.cols()),
            found: b.shape(),
        });
    }
    if acc.shape() != (a.cols(), b.cols()) {
        return Err(LinalgError::DimensionMismatch {
            op: "gram_accumulate",
            expected: (a.cols(), b.cols()),
            found: acc.shape(),
        });
    }
    for j in 0..b.cols() {
        let bj = b.col(j);
        for i in 0..a.cols() {
            acc[(i, j)] = dot_from(acc[(i, j)], a.col(i), bj);
        }
    }
    Ok(())
}

#[inline]
pub(crate) fn dot_from(init: f64, x: &[f64], y: &[f64]) -> f64 {
    let mut t = init;
    for (a, b) in x.iter().zip(y) {
        t += a * b;
    }
    t
}

/// Upper Cholesky factor `G` with `G^T G = A`.
///
/// `A` is symmetrized as `(A + A^T) / 2` first, since Gram buffers that come
/// out of a reduction are only symmetric to rounding.
pub fn chol_factor(a: &DenseMatrix) -> Result<UpperTriangular, LinalgError> {
    let a = a.symmetrized()?;
    let n = a.rows();
    let mut g = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= g[(k, j)] * g[(k, j)];
        }
        if d.is_nan() || d <= 0.0 || d.is_infinite() {
            return Err(LinalgError::NotSpd { pivot: j + 1 });
        }
        let gjj = d.sqrt();
        g[(j, j)] = gjj;
        for i in j + 1..n {
            let mut v = a[(j, i)];
            for k in 0..j {
                v -= g[(k, j)] * g[(k, i)];
            }
            g[(j, i)] = v / gjj;
        }
    }
    if !g.is_finite() {
        return Err(LinalgError::NonFinite { op: "chol_factor" });
    }
    UpperTriangular::try_from_dense(g, n.max(1))
}

fn check_diagonal(g: &UpperTriangular) -> Result<(), LinalgError> {
    match g.diag().iter().position(|&d| d == 0.0) {
        Some(index) => Err(LinalgError::Singular { index }),
        None => Ok(()),
    }
}

/// `W = B G^{-1}` by column-oriented substitution. Each row of `B` is solved
/// independently, so the result for a row does not depend on which other
/// rows are present.
pub fn tri_solve_right(b: &DenseMatrix, g: &UpperTriangular) -> Result<DenseMatrix, LinalgError> {
    let n = g.dim();
    if b.cols() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "tri_solve_right",
            expected: (b.rows(), n),
            found: b.shape(),
        });
    }
    check_diagonal(g)?;
    let mut w = b.clone();
    let rows = b.rows();
    for j in 0..n {
        for k in 0..j {
            let gkj = g.get(k, j);
            if gkj == 0.0 {
                continue;
            }
            let (done, rest) = w.as_mut_slice().split_at_mut(j * rows);
            let wk = &done[k * rows..(k + 1) * rows];
            for (dst, src) in rest[..rows].iter_mut().zip(wk) {
                *dst -= src * gkj;
            }
        }
        let gjj = g.get(j, j);
        for v in w.col_mut(j) {
            *v /= gjj;
        }
    }
    if !w.is_finite() {
        return Err(LinalgError::NonFinite { op: "tri_solve_right" });
    }
    Ok(w)
}

/// `W = G^{-T} B` by forward substitution on `G^T W = B`. No inverse is
/// formed.
pub fn tri_solve_transposed_left(g: &UpperTriangular, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let n = g.dim();
    if b.rows() != n {
        return Err(LinalgError::DimensionMismatch {
            op: "tri_solve_transposed_left",
            expected: (n, b.cols()),
            found: b.shape(),
        });
    }
    check_diagonal(g)?;
    let mut w = b.clone();
    for c in 0..b.cols() {
        let col = w.col_mut(c);
        for i in 0..n {
            let mut v = col[i];
            for (k, &ck) in col[..i].iter().enumerate() {
                v -= g.get(k, i) * ck;
            }
            col[i] = v / g.get(i, i);
        }
    }
    if !w.is_finite() {
        return Err(LinalgError::NonFinite {
            op: "tri_solve_transposed_left",
        });
    }
    Ok(w)
}
