use super::householder::norm2;
use super::{DenseMatrix, LinalgError, UpperTriangular};

const REL_TOL: f64 = 1e-10;
const MAX_ITERS: usize = 5000;

/// Fixed, unstructured start vector so that results are reproducible and the
/// iteration does not start orthogonal to a structured dominant vector.
fn start_vector(n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n)
        .map(|i| 0.5 + ((i as f64 + 1.0) * 0.618_033_988_749_894_9).fract())
        .collect();
    let nv = norm2(&v);
    v.into_iter().map(|x| x / nv).collect()
}

/// Largest singular value of the operator `apply` (with adjoint
/// `apply_t`) acting on vectors of length `n`.
fn power_iteration(n: usize, apply: impl Fn(&[f64]) -> Vec<f64>, apply_t: impl Fn(&[f64]) -> Vec<f64>) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut v = start_vector(n);
    let mut sigma = 0.0;
    for _ in 0..MAX_ITERS {
        let u = apply(&v);
        let next = norm2(&u);
        if next == 0.0 {
            return 0.0;
        }
        let w = apply_t(&u);
        let nw = norm2(&w);
        if nw == 0.0 {
            return next;
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let converged = (next - sigma).abs() <= REL_TOL * next;
        sigma = next;
        if converged {
            break;
        }
    }
    sigma
}

fn mat_vec(a: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.rows()];
    for (j, &vj) in v.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(a.col(j)) {
            *o += x * vj;
        }
    }
    out
}

fn mat_t_vec(a: &DenseMatrix, u: &[f64]) -> Vec<f64> {
    (0..a.cols())
        .map(|j| a.col(j).iter().zip(u).map(|(x, y)| x * y).sum())
        .collect()
}

/// Spectral norm by power iteration on `A^T A` (relative tolerance `1e-10`,
/// at most 5000 iterations). The zero matrix has norm 0.
pub fn two_norm(a: &DenseMatrix) -> f64 {
    if a.max_abs() == 0.0 {
        return 0.0;
    }
    power_iteration(a.cols(), |v| mat_vec(a, v), |u| mat_t_vec(a, u))
}

/// `‖G^{-1}‖₂` by power iteration with triangular solves.
pub fn two_norm_inverse_upper(g: &UpperTriangular) -> Result<f64, LinalgError> {
    if let Some(index) = g.diag().iter().position(|&d| d == 0.0) {
        return Err(LinalgError::Singular { index });
    }
    let n = g.dim();
    let solve = |b: &[f64]| {
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut v = x[i];
            for (k, &xk) in x.iter().enumerate().skip(i + 1) {
                v -= g.get(i, k) * xk;
            }
            x[i] = v / g.get(i, i);
        }
        x
    };
    let solve_t = |b: &[f64]| {
        let mut x = b.to_vec();
        for i in 0..n {
            let mut v = x[i];
            for (k, &xk) in x[..i].iter().enumerate() {
                v -= g.get(k, i) * xk;
            }
            x[i] = v / g.get(i, i);
        }
        x
    };
    Ok(power_iteration(n, solve, solve_t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// One-sided Jacobi SVD; returns the singular values (unsorted).
    fn jacobi_singular_values(a: &DenseMatrix) -> Vec<f64> {
        let mut w = a.clone();
        let n = w.cols();
        for _sweep in 0..60 {
            let mut off = 0.0_f64;
            for p in 0..n {
                for q in p + 1..n {
                    let alpha: f64 = w.col(p).iter().map(|x| x * x).sum();
                    let beta: f64 = w.col(q).iter().map(|x| x * x).sum();
                    let gamma: f64 = w.col(p).iter().zip(w.col(q)).map(|(x, y)| x * y).sum();
                    if gamma == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / (alpha * beta).sqrt());
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    for i in 0..w.rows() {
                        let (x, y) = (w[(i, p)], w[(i, q)]);
                        w[(i, p)] = c * x - s * y;
                        w[(i, q)] = s * x + c * y;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        (0..n).map(|j| norm2(w.col(j))).collect()
    }

    #[test]
    fn identity_and_diagonal() {
        assert!((two_norm(&DenseMatrix::identity(3)) - 1.0).abs() < 1e-12);
        assert!((two_norm(&DenseMatrix::diagonal(&[3.0, 1.0])) - 3.0).abs() < 1e-9);
        assert_eq!(two_norm(&DenseMatrix::zeros(4, 2)), 0.0);
    }

    #[test]
    fn random_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = DenseMatrix::from_fn(10, 4, |_, _| StandardNormal.sample(&mut rng));
        let oracle = jacobi_singular_values(&a).into_iter().fold(0.0, f64::max);
        let est = two_norm(&a);
        assert!((est - oracle).abs() <= 1e-8 * oracle, "{est} vs {oracle}");
    }

    #[test]
    fn inverse_norm_of_diagonal() {
        let g = UpperTriangular::from_upper(&DenseMatrix::diagonal(&[2.0, 0.25, 1.0])).unwrap();
        assert!((two_norm_inverse_upper(&g).unwrap() - 4.0).abs() < 1e-9);
    }
}
