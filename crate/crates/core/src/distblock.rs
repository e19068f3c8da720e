//! Row-distributed block matrices and the fused tall-skinny Gram product,
//! which is the only operation in the algorithms that communicates besides
//! TSQR.

use std::ops::Range;

use crate::comm::{CommError, Communicator, Reduction};
use crate::dense::{gram, gram_accumulate, tri_solve_right, DenseMatrix, LinalgError, UpperTriangular};
use crate::error::Error;

/// Ceiling-split contiguous row partition: rank `r` owns rows
/// `[r * ceil(n/P), min((r+1) * ceil(n/P), n))`. Trailing ranks may be short
/// or empty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowLayout {
    n: usize,
    procs: usize,
    rank: usize,
}

impl RowLayout {
    pub fn new(n: usize, procs: usize, rank: usize) -> Self {
        assert!(procs > 0 && rank < procs, "rank {rank} out of 0..{procs}");
        Self { n, procs, rank }
    }

    pub fn for_comm(n: usize, comm: &Communicator) -> Self {
        Self::new(n, comm.size(), comm.rank())
    }

    pub fn global_rows(&self) -> usize {
        self.n
    }

    pub fn procs(&self) -> usize {
        self.procs
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn chunk(&self) -> usize {
        self.n.div_ceil(self.procs)
    }

    pub fn range_of(&self, rank: usize) -> Range<usize> {
        let c = self.chunk();
        let lo = (rank * c).min(self.n);
        let hi = ((rank + 1) * c).min(self.n);
        lo..hi
    }

    pub fn range(&self) -> Range<usize> {
        self.range_of(self.rank)
    }

    pub fn local_rows(&self) -> usize {
        self.range().len()
    }
}

/// An `n x (q s)` matrix split by rows across the ranks, logically made of
/// `q` block columns of width `s`. Each rank holds only its shard.
#[derive(Clone, Debug, PartialEq)]
pub struct DistBlockMatrix {
    layout: RowLayout,
    block: usize,
    local: DenseMatrix,
}

/// A contiguous column range of a distributed matrix, used as an operand of
/// [`fused_gram`].
#[derive(Clone, Debug)]
pub struct ColRange<'a> {
    matrix: &'a DistBlockMatrix,
    cols: Range<usize>,
}

impl ColRange<'_> {
    pub fn width(&self) -> usize {
        self.cols.len()
    }

    fn local(&self) -> DenseMatrix {
        self.matrix.local.columns(self.cols.clone())
    }
}

impl DistBlockMatrix {
    /// Takes this rank's shard of a replicated global matrix. Setup is out of
    /// band and is not counted as synchronization.
    pub fn distribute(x: &DenseMatrix, s: usize, comm: &Communicator) -> Result<Self, Error> {
        let layout = RowLayout::for_comm(x.rows(), comm);
        Self::from_local(layout, s, x.row_range(layout.range()))
    }

    pub fn from_local(layout: RowLayout, s: usize, local: DenseMatrix) -> Result<Self, Error> {
        if s == 0 || !local.cols().is_multiple_of(s) {
            return Err(Error::Shape(format!(
                "block width {s} does not divide {} columns",
                local.cols()
            )));
        }
        if local.rows() != layout.local_rows() {
            return Err(Error::Shape(format!(
                "shard has {} rows but rank {} owns {}",
                local.rows(),
                layout.rank(),
                layout.local_rows()
            )));
        }
        Ok(Self {
            layout,
            block: s,
            local,
        })
    }

    pub fn zeros(layout: RowLayout, s: usize, blocks: usize) -> Self {
        Self {
            layout,
            block: s,
            local: DenseMatrix::zeros(layout.local_rows(), s * blocks),
        }
    }

    pub fn layout(&self) -> RowLayout {
        self.layout
    }

    pub fn global_rows(&self) -> usize {
        self.layout.global_rows()
    }

    pub fn block_width(&self) -> usize {
        self.block
    }

    pub fn block_count(&self) -> usize {
        self.local.cols() / self.block
    }

    pub fn cols(&self) -> usize {
        self.local.cols()
    }

    pub fn local(&self) -> &DenseMatrix {
        &self.local
    }

    pub fn into_local(self) -> DenseMatrix {
        self.local
    }

    /// Columns `range` (global column indices).
    pub fn col_range(&self, range: Range<usize>) -> ColRange<'_> {
        assert!(
            range.end <= self.cols(),
            "column range {range:?} out of {}",
            self.cols()
        );
        ColRange {
            matrix: self,
            cols: range,
        }
    }

    /// The whole matrix as an operand.
    pub fn all(&self) -> ColRange<'_> {
        self.col_range(0..self.cols())
    }

    /// Block columns `range` as an operand.
    pub fn blocks(&self, range: Range<usize>) -> ColRange<'_> {
        self.col_range(range.start * self.block..range.end * self.block)
    }

    /// Copy of block column `k` as a single-block matrix.
    pub fn block(&self, k: usize) -> DistBlockMatrix {
        Self {
            layout: self.layout,
            block: self.block,
            local: self.local.columns(k * self.block..(k + 1) * self.block),
        }
    }

    /// Overwrites block column `k` with the single block `b`.
    pub fn set_block(&mut self, k: usize, b: &DistBlockMatrix) -> Result<(), Error> {
        if b.local.rows() != self.local.rows() || b.cols() != self.block {
            return Err(Error::Shape(format!(
                "block of shape {:?} does not fit block column {k} of width {}",
                b.local.shape(),
                self.block
            )));
        }
        self.local.set_submatrix(0, k * self.block, &b.local);
        Ok(())
    }

    /// Reassembles the global matrix on every rank. Counted as one event
    /// labelled `gather`, which algorithm accounting filters out.
    pub fn gather(&self, comm: &Communicator) -> Result<DenseMatrix, CommError> {
        comm.gather_rows(&self.local, "gather")
    }
}

/// A small matrix that every rank holds an identical copy of.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicatedSmall(DenseMatrix);

impl ReplicatedSmall {
    pub fn new(m: DenseMatrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn into_inner(self) -> DenseMatrix {
        self.0
    }

    /// FNV-1a hash of the entry bits, for cheap cross-rank comparison.
    pub fn digest(&self) -> u64 {
        digest(&self.0)
    }
}

pub fn digest(m: &DenseMatrix) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let words = [m.rows() as u64, m.cols() as u64];
    for w in words.iter().copied().chain(m.as_slice().iter().map(|x| x.to_bits())) {
        for b in w.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

fn concat(parts: &[ColRange<'_>]) -> Result<DenseMatrix, Error> {
    let locals: Vec<DenseMatrix> = parts.iter().map(ColRange::local).collect();
    let refs: Vec<&DenseMatrix> = locals.iter().collect();
    Ok(DenseMatrix::hstack(&refs)?)
}

fn check_operands(left: &[ColRange<'_>], right: &[ColRange<'_>]) -> Result<(), Error> {
    let first = left
        .first()
        .or(right.first())
        .ok_or_else(|| Error::Shape("fused_gram needs operands".into()))?;
    let layout = first.matrix.layout;
    if let Some(bad) = left.iter().chain(right).find(|c| c.matrix.layout != layout) {
        return Err(Error::Shape(format!(
            "operands distributed differently: {} vs {} global rows",
            layout.global_rows(),
            bad.matrix.global_rows()
        )));
    }
    Ok(())
}

/// Local shards of `left` and `right` concatenated column-wise, ready for a
/// fused product.
pub(crate) fn operands(left: &[ColRange<'_>], right: &[ColRange<'_>]) -> Result<(DenseMatrix, DenseMatrix), Error> {
    check_operands(left, right)?;
    Ok((concat(left)?, concat(right)?))
}

/// `[left...]^T [right...]` in one synchronization: one local product per
/// rank and one reduction of the concatenated buffer, however many logical
/// products are fused.
pub fn fused_gram(
    left: &[ColRange<'_>],
    right: &[ColRange<'_>],
    comm: &Communicator,
    label: &str,
) -> Result<ReplicatedSmall, Error> {
    let (a, b) = operands(left, right)?;
    let shape = (a.cols(), b.cols());
    let out = match comm.reduction() {
        Reduction::RankOrdered => comm.allreduce_accumulate(shape, label, |acc| gram_accumulate(acc, &a, &b))?,
        Reduction::Tree => comm.allreduce_sum(&gram(&a, &b)?, label)?,
    };
    Ok(ReplicatedSmall(out))
}

/// `Y <- Y - Q S` on the local shard; no communication. Every row is
/// updated independently with a fixed column order.
pub fn local_axpy_block(y: &mut DistBlockMatrix, q: ColRange<'_>, s: &DenseMatrix) -> Result<(), Error> {
    if q.matrix.layout != y.layout || s.rows() != q.width() || s.cols() != y.cols() {
        return Err(LinalgError::DimensionMismatch {
            op: "local_axpy_block",
            expected: (q.width(), y.cols()),
            found: s.shape(),
        }
        .into());
    }
    let rows = y.local.rows();
    for j in 0..y.cols() {
        for (k, qc) in q.cols.clone().enumerate() {
            let skj = s[(k, j)];
            if skj == 0.0 {
                continue;
            }
            let src = &q.matrix.local.as_slice()[qc * rows..(qc + 1) * rows];
            for (d, x) in y.local.col_mut(j).iter_mut().zip(src) {
                *d -= x * skj;
            }
        }
    }
    Ok(())
}

/// `U <- U G^{-1}` on the local shard; no communication.
pub fn scale_right_block(u: &mut DistBlockMatrix, g: &UpperTriangular) -> Result<(), Error> {
    u.local = tri_solve_right(&u.local, g)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::{run_spmd, SpmdConfig};
    use crate::dense::{householder_qr, UNIT_ROUNDOFF as U};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn ceiling_split() {
        let sizes: Vec<usize> = (0..4).map(|r| RowLayout::new(10, 4, r).local_rows()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        for (n, p) in [(0, 3), (5, 8), (17, 4), (64, 8), (7, 1)] {
            let total: usize = (0..p).map(|r| RowLayout::new(n, p, r).local_rows()).sum();
            assert_eq!(total, n, "n={n} P={p}");
            for r in 1..p {
                let l = RowLayout::new(n, p, r);
                assert_eq!(l.range_of(r - 1).end, l.range_of(r).start);
            }
        }
    }

    #[test]
    fn single_rank_shard_is_whole_matrix() {
        let x = random(6, 4, 1);
        let d = DistBlockMatrix::distribute(&x, 2, &Communicator::serial()).unwrap();
        assert!(d.local().bitwise_eq(&x));
        assert_eq!(d.block_count(), 2);
        assert!(DistBlockMatrix::distribute(&x, 3, &Communicator::serial()).is_err());
    }

    #[test]
    fn gather_round_trip_across_ranks() {
        let x = random(10, 4, 2);
        for p in [1, 2, 3, 4, 8] {
            let run = run_spmd(p, &SpmdConfig::default(), |c| {
                let d = DistBlockMatrix::distribute(&x, 2, c).unwrap();
                d.gather(c).unwrap()
            })
            .unwrap();
            assert!(run.results.iter().all(|g| g.bitwise_eq(&x)), "P={p}");
            assert_eq!(run.stats.count_prefixed("gather"), 1);
        }
    }

    #[test]
    fn orthonormal_block_gram_is_identity() {
        let (q, _) = householder_qr(&random(30, 3, 3)).unwrap();
        let c = Communicator::serial();
        let d = DistBlockMatrix::distribute(&q, 3, &c).unwrap();
        let g = fused_gram(&[d.all()], &[d.all()], &c, "gram/t").unwrap();
        assert!(g.matrix().sub(&DenseMatrix::identity(3)).unwrap().max_abs() <= 10.0 * U);
    }

    #[test]
    fn fused_gram_is_bitwise_across_process_counts() {
        let x = random(23, 6, 4);
        let results: Vec<DenseMatrix> = [1, 3, 4, 8]
            .into_iter()
            .map(|p| {
                let run = run_spmd(p, &SpmdConfig::default(), |c| {
                    let d = DistBlockMatrix::distribute(&x, 2, c).unwrap();
                    fused_gram(&[d.blocks(0..2)], &[d.blocks(1..3)], c, "gram/t").unwrap()
                })
                .unwrap();
                assert!(run.results.iter().all(|r| r.digest() == run.results[0].digest()));
                run.results[0].clone().into_inner()
            })
            .collect();
        let oracle = gram(&x.columns(0..4), &x.columns(2..6)).unwrap();
        for r in &results {
            assert!(r.bitwise_eq(&oracle));
        }
    }

    #[test]
    fn fused_buffer_is_one_sync_with_expected_words() {
        let (k, s) = (3, 2);
        let x = random(40, (k + 2) * s, 5);
        let run = run_spmd(4, &SpmdConfig::default(), |c| {
            let d = DistBlockMatrix::distribute(&x, s, c).unwrap();
            let u = d.block(k);
            let next = d.block(k + 1);
            fused_gram(
                &[d.blocks(0..k), u.all(), next.all()],
                &[u.all(), next.all()],
                c,
                "gram/f",
            )
            .unwrap()
            .into_inner()
            .shape()
        })
        .unwrap();
        assert_eq!(run.results[0], ((k + 2) * s, 2 * s));
        assert_eq!(run.stats.sync_count, 1);
        assert_eq!(run.stats.words_reduced, ((k * s + 2 * s) * 2 * s) as u64);
    }

    #[test]
    fn mismatched_rows_rejected() {
        let c = Communicator::serial();
        let a = DistBlockMatrix::distribute(&random(5, 2, 1), 2, &c).unwrap();
        let b = DistBlockMatrix::distribute(&random(6, 2, 1), 2, &c).unwrap();
        assert!(matches!(
            fused_gram(&[a.all()], &[b.all()], &c, "g"),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn axpy_and_scale_are_local() {
        let c = Communicator::serial();
        let x = random(20, 4, 6);
        let (qd, _) = householder_qr(&x.columns(0..2)).unwrap();
        let q = DistBlockMatrix::distribute(&qd, 2, &c).unwrap();
        let mut y = DistBlockMatrix::distribute(&x.columns(2..4), 2, &c).unwrap();
        let before = y.clone();
        local_axpy_block(&mut y, q.all(), &DenseMatrix::zeros(2, 2)).unwrap();
        assert_eq!(y, before);

        let s = fused_gram(&[q.all()], &[y.all()], &c, "gram/p").unwrap();
        local_axpy_block(&mut y, q.all(), s.matrix()).unwrap();
        let resid = gram(q.local(), y.local()).unwrap();
        assert!(resid.max_abs() < 1e-14);

        let g = UpperTriangular::from_upper(&DenseMatrix::from_rows(&[&[2.0, 0.5], &[0.0, 3.0]])).unwrap();
        let orig = y.clone();
        let mut scaled = DistBlockMatrix::distribute(&g.left_mul(y.local()).unwrap(), 2, &c).unwrap();
        scale_right_block(&mut scaled, &g).unwrap();
        assert!(scaled.local().sub(orig.local()).unwrap().max_abs() < 1e-14);
        scale_right_block(&mut y, &UpperTriangular::identity(2)).unwrap();
        assert!(y.local().bitwise_eq(orig.local()));
        assert_eq!(c.stats().sync_count, 1);
    }
}
