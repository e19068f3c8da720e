use serde::{Deserialize, Serialize};

use super::{DenseMatrix, LinalgError};

/// Square upper-triangular matrix with an `s x s` block structure.
///
/// Entries below the diagonal are stored and are always exactly `0.0`.
/// Block `(i, j)` covers rows `i*s..(i+1)*s` and columns `j*s..(j+1)*s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperTriangular {
    block: usize,
    inner: DenseMatrix,
}

impl UpperTriangular {
    pub fn zeros(dim: usize, block: usize) -> Self {
        assert!(
            block > 0 && dim.is_multiple_of(block),
            "block width {block} must divide {dim}"
        );
        Self {
            block,
            inner: DenseMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            block: dim.max(1),
            inner: DenseMatrix::identity(dim),
        }
    }

    /// Takes the upper triangle of `m`, dropping whatever is below the
    /// diagonal. The result is a single block.
    pub fn from_upper(m: &DenseMatrix) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                op: "UpperTriangular::from_upper",
                shape: m.shape(),
            });
        }
        let n = m.rows();
        let inner = DenseMatrix::from_fn(n, n, |i, j| if i <= j { m[(i, j)] } else { 0.0 });
        Ok(Self { block: n.max(1), inner })
    }

    /// Wraps `m`, which must already be exactly upper triangular.
    pub fn try_from_dense(m: DenseMatrix, block: usize) -> Result<Self, LinalgError> {
        if !m.is_square() {
            return Err(LinalgError::NotSquare {
                op: "UpperTriangular::try_from_dense",
                shape: m.shape(),
            });
        }
        if !m.is_upper_triangular() {
            return Err(LinalgError::NotUpperTriangular);
        }
        if block == 0 || !m.rows().is_multiple_of(block) {
            return Err(LinalgError::DimensionMismatch {
                op: "UpperTriangular block width",
                expected: (m.rows(), block),
                found: m.shape(),
            });
        }
        Ok(Self { block, inner: m })
    }

    pub fn dim(&self) -> usize {
        self.inner.rows()
    }

    pub fn block_width(&self) -> usize {
        self.block
    }

    pub fn block_count(&self) -> usize {
        self.dim() / self.block
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.inner[(i, j)]
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.inner[(i, i)]).collect()
    }

    pub fn as_dense(&self) -> &DenseMatrix {
        &self.inner
    }

    pub fn into_dense(self) -> DenseMatrix {
        self.inner
    }

    /// Block `(i, j)` as an `s x s` matrix.
    pub fn block(&self, i: usize, j: usize) -> DenseMatrix {
        let s = self.block;
        self.inner.submatrix(i * s..(i + 1) * s, j * s..(j + 1) * s)
    }

    /// Blocks `(0..j, j)` stacked, i.e. the part of block column `j` above the
    /// diagonal block.
    pub fn above_diagonal(&self, j: usize) -> DenseMatrix {
        let s = self.block;
        self.inner.submatrix(0..j * s, j * s..(j + 1) * s)
    }

    /// Diagonal block `j` as its own single-block triangle.
    pub fn diagonal_block(&self, j: usize) -> UpperTriangular {
        let b = self.block(j, j);
        UpperTriangular {
            block: self.block,
            inner: b,
        }
    }

    /// Overwrites blocks `(0..j, j)`; `m` must be `j*s x s`.
    pub fn set_above_diagonal(&mut self, j: usize, m: &DenseMatrix) -> Result<(), LinalgError> {
        let s = self.block;
        if m.shape() != (j * s, s) {
            return Err(LinalgError::DimensionMismatch {
                op: "set_above_diagonal",
                expected: (j * s, s),
                found: m.shape(),
            });
        }
        self.inner.set_submatrix(0, j * s, m);
        Ok(())
    }

    pub fn set_diagonal_block(&mut self, j: usize, g: &UpperTriangular) -> Result<(), LinalgError> {
        let s = self.block;
        if g.dim() != s {
            return Err(LinalgError::DimensionMismatch {
                op: "set_diagonal_block",
                expected: (s, s),
                found: (g.dim(), g.dim()),
            });
        }
        self.inner.set_submatrix(j * s, j * s, g.as_dense());
        Ok(())
    }

    /// `self * other`; the product of upper triangles stays upper.
    pub fn mul_upper(&self, other: &UpperTriangular) -> Result<UpperTriangular, LinalgError> {
        let n = self.dim();
        if other.dim() != n {
            return Err(LinalgError::DimensionMismatch {
                op: "mul_upper",
                expected: (n, n),
                found: (other.dim(), other.dim()),
            });
        }
        let inner = DenseMatrix::from_fn(n, n, |i, j| {
            if i > j {
                return 0.0;
            }
            let mut acc = 0.0;
            for k in i..=j {
                acc += self.inner[(i, k)] * other.inner[(k, j)];
            }
            acc
        });
        Ok(UpperTriangular {
            block: self.block,
            inner,
        })
    }

    /// `m * self` for a dense left factor.
    pub fn left_mul(&self, m: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
        let n = self.dim();
        if m.cols() != n {
            return Err(LinalgError::DimensionMismatch {
                op: "left_mul",
                expected: (m.rows(), n),
                found: m.shape(),
            });
        }
        Ok(DenseMatrix::from_fn(m.rows(), n, |i, j| {
            let mut acc = 0.0;
            for k in 0..=j {
                acc += m[(i, k)] * self.inner[(k, j)];
            }
            acc
        }))
    }

    /// True if every diagonal `s x s` block has a nonnegative diagonal and the
    /// strictly lower part is exactly zero.
    pub fn is_well_formed(&self) -> bool {
        self.inner.is_upper_triangular() && self.diag().iter().all(|&d| d >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_accessors() {
        let mut r = UpperTriangular::zeros(4, 2);
        let above = DenseMatrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        r.set_above_diagonal(1, &above).unwrap();
        r.set_diagonal_block(1, &UpperTriangular::identity(2)).unwrap();
        assert_eq!(r.block(0, 1), above);
        assert_eq!(r.block(1, 1), DenseMatrix::identity(2));
        assert_eq!(r.above_diagonal(1), above);
        assert_eq!(r.block(1, 0), DenseMatrix::zeros(2, 2));
        assert!(r.as_dense().is_upper_triangular());
    }

    #[test]
    fn rejects_lower_entries() {
        let m = DenseMatrix::from_rows(&[&[1.0, 0.0], &[1e-300, 1.0]]);
        assert!(matches!(
            UpperTriangular::try_from_dense(m, 1),
            Err(LinalgError::NotUpperTriangular)
        ));
    }

    #[test]
    fn products_stay_upper() {
        let a = UpperTriangular::from_upper(&DenseMatrix::from_rows(&[&[2.0, 1.0], &[9.0, 3.0]])).unwrap();
        let b = UpperTriangular::from_upper(&DenseMatrix::from_rows(&[&[1.0, 4.0], &[0.0, 5.0]])).unwrap();
        let p = a.mul_upper(&b).unwrap();
        assert_eq!(p.as_dense(), &DenseMatrix::from_rows(&[&[2.0, 13.0], &[0.0, 15.0]]));
        let d = b.left_mul(&DenseMatrix::from_rows(&[&[1.0, 1.0]])).unwrap();
        assert_eq!(d, DenseMatrix::from_rows(&[&[1.0, 9.0]]));
    }
}
