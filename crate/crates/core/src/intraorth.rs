//! Intraorthogonalization of a single distributed block: TSQR, Cholesky QR
//! and the Pythagorean Cholesky update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::comm::{pack, tree_rounds, tree_steps, unpack, CommError, Communicator, Exchange, Reduction, TreeStep};
use crate::dense::{
    chol_factor, gram, gram_accumulate, householder_qr_trapezoidal, DenseMatrix, LinalgError, UpperTriangular,
};
use crate::distblock::{fused_gram, operands, scale_right_block, ColRange, DistBlockMatrix};
use crate::error::Error;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntraorthKind {
    #[default]
    Tsqr,
    CholQr,
}

impl fmt::Display for IntraorthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IntraorthKind::Tsqr => "tsqr",
            IntraorthKind::CholQr => "cholqr",
        })
    }
}

impl FromStr for IntraorthKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tsqr" => Ok(IntraorthKind::Tsqr),
            "cholqr" | "chol" => Ok(IntraorthKind::CholQr),
            other => Err(format!(
                "unknown intraorthogonalization '{other}' (expected tsqr or cholqr)"
            )),
        }
    }
}

/// Economic QR of one distributed block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockQr {
    pub q: DistBlockMatrix,
    pub r: UpperTriangular,
}

/// `chol(T - S^T S)`, the Cholesky factor of the projected complement's Gram
/// matrix computed without touching the tall data.
pub fn pyth_chol(t: &DenseMatrix, s: &DenseMatrix) -> Result<UpperTriangular, LinalgError> {
    let sts = gram(s, s)?;
    chol_factor(&t.sub(&sts)?)
}

pub fn intraorth(kind: IntraorthKind, x: &DistBlockMatrix, comm: &Communicator, label: &str) -> Result<BlockQr, Error> {
    match kind {
        IntraorthKind::Tsqr => tsqr(x, comm, label),
        IntraorthKind::CholQr => cholqr(x, comm, label),
    }
}

/// Cholesky QR: one fused Gram product, then local Cholesky and solve.
pub fn cholqr(x: &DistBlockMatrix, comm: &Communicator, label: &str) -> Result<BlockQr, Error> {
    check_tall(x)?;
    let g = fused_gram(&[x.all()], &[x.all()], comm, label)?;
    let r = chol_factor(g.matrix())?;
    let mut q = x.clone();
    scale_right_block(&mut q, &r)?;
    Ok(BlockQr { q, r })
}

/// Tall-skinny QR in a single synchronization.
///
/// With [`Reduction::RankOrdered`] the triangular factor is built by Givens
/// rotations that absorb the rows in global order, the running factor
/// travelling from rank to rank, and `Q` is reconstructed by replaying the
/// rotations backwards; the result does not depend on the process count.
/// With [`Reduction::Tree`] each rank factors its shard by Householder QR and
/// the factors are combined pairwise up a binary tree, with the small `Q`
/// factors of each combine applied on the way back down.
pub fn tsqr(x: &DistBlockMatrix, comm: &Communicator, label: &str) -> Result<BlockQr, Error> {
    tsqr_inner(x, None, comm, label).map(|(qr, _)| qr)
}

/// [`tsqr`] that additionally returns `[left...]^T [right...]`, reduced in
/// the same synchronization.
pub fn tsqr_with_gram(
    x: &DistBlockMatrix,
    left: &[ColRange<'_>],
    right: &[ColRange<'_>],
    comm: &Communicator,
    label: &str,
) -> Result<(BlockQr, DenseMatrix), Error> {
    let (a, b) = operands(left, right)?;
    if a.rows() != x.local().rows() {
        return Err(Error::Shape(
            "gram operands are distributed differently from the block".into(),
        ));
    }
    let (qr, g) = tsqr_inner(x, Some((&a, &b)), comm, label)?;
    Ok((qr, g))
}

fn check_tall(x: &DistBlockMatrix) -> Result<(), Error> {
    if x.global_rows() < x.cols() || x.cols() == 0 {
        return Err(Error::RankDeficient {
            rows: x.global_rows(),
            cols: x.cols(),
        });
    }
    Ok(())
}

fn tsqr_inner(
    x: &DistBlockMatrix,
    extra: Option<(&DenseMatrix, &DenseMatrix)>,
    comm: &Communicator,
    label: &str,
) -> Result<(BlockQr, DenseMatrix), Error> {
    check_tall(x)?;
    let s = x.cols();
    let gshape = extra.map_or((0, 0), |(a, b)| (a.cols(), b.cols()));
    let words = s * s + gshape.0 * gshape.1;
    let local = x.local();
    let (q, r, g) = match comm.reduction() {
        Reduction::RankOrdered => comm.collective(label, words, 0, |ex| chain_tsqr(ex, local, extra, gshape))?,
        Reduction::Tree => comm.collective(label, words, tree_rounds(comm.size()), |ex| {
            tree_tsqr(ex, local, extra, gshape)
        })?,
    };
    if (0..s).any(|i| r[(i, i)] == 0.0) {
        return Err(Error::RankDeficient {
            rows: x.global_rows(),
            cols: s,
        });
    }
    let r = UpperTriangular::try_from_dense(r, s)?;
    let q = DistBlockMatrix::from_local(x.layout(), x.block_width(), q)?;
    Ok((BlockQr { q, r }, g))
}

/// Folds the rows of `x` into the upper-triangular `r` with Givens
/// rotations, returning the `(cos, sin)` pairs (row-major, `s` per row).
fn absorb_rows(r: &mut DenseMatrix, x: &DenseMatrix) -> Vec<(f64, f64)> {
    let s = r.cols();
    let mut log = Vec::with_capacity(x.rows() * s);
    let mut row = vec![0.0; s];
    for i in 0..x.rows() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = x[(i, j)];
        }
        for j in 0..s {
            let (a, b) = (r[(j, j)], row[j]);
            if b == 0.0 {
                log.push((1.0, 0.0));
                continue;
            }
            let h = a.hypot(b);
            let (c, sn) = (a / h, b / h);
            r[(j, j)] = h;
            row[j] = 0.0;
            for l in j + 1..s {
                let (u, v) = (r[(j, l)], row[l]);
                r[(j, l)] = c * u + sn * v;
                row[l] = c * v - sn * u;
            }
            log.push((c, sn));
        }
    }
    log
}

/// Replays the rotations of [`absorb_rows`] backwards starting from `c`
/// (the accumulated factor of all later rows). Returns the local `Q` rows
/// and the factor to hand to the preceding rows.
fn replay_rows(rows: usize, log: &[(f64, f64)], mut c: DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let s = c.rows();
    let mut q = DenseMatrix::zeros(rows, s);
    let mut bottom = vec![0.0; s];
    for i in (0..rows).rev() {
        bottom.iter_mut().for_each(|v| *v = 0.0);
        for j in (0..s).rev() {
            let (cs, sn) = log[i * s + j];
            if sn == 0.0 && cs == 1.0 {
                continue;
            }
            for (t, b) in bottom.iter_mut().enumerate() {
                let u = c[(j, t)];
                c[(j, t)] = cs * u - sn * *b;
                *b = sn * u + cs * *b;
            }
        }
        for (t, b) in bottom.iter().enumerate() {
            q[(i, t)] = *b;
        }
    }
    (q, c)
}

type TsqrParts = (DenseMatrix, DenseMatrix, DenseMatrix);

fn chain_tsqr(
    ex: &Exchange<'_>,
    x: &DenseMatrix,
    extra: Option<(&DenseMatrix, &DenseMatrix)>,
    gshape: (usize, usize),
) -> Result<TsqrParts, CommError> {
    let s = x.cols();
    let (rank, size) = (ex.rank(), ex.size());
    let (mut r, mut g) = if rank == 0 {
        (DenseMatrix::zeros(s, s), DenseMatrix::zeros(gshape.0, gshape.1))
    } else {
        let mut parts = unpack(&ex.recv(rank - 1, 0)?, &[(s, s), gshape]).map_err(|e| ex.local(e))?;
        let g = parts.pop().expect("two parts");
        (parts.pop().expect("two parts"), g)
    };
    let log = absorb_rows(&mut r, x);
    if let Some((a, b)) = extra {
        gram_accumulate(&mut g, a, b).map_err(|e| ex.local(e))?;
    }
    let (c, r, g) = if rank + 1 < size {
        ex.send(rank + 1, 0, pack(&[&r, &g]))?;
        let mut parts = unpack(&ex.recv(rank + 1, 1)?, &[(s, s), (s, s), gshape]).map_err(|e| ex.local(e))?;
        let g = parts.pop().expect("three parts");
        let r = parts.pop().expect("three parts");
        (parts.pop().expect("three parts"), r, g)
    } else {
        (DenseMatrix::identity(s), r, g)
    };
    let (q, c_prev) = replay_rows(x.rows(), &log, c);
    if rank > 0 {
        ex.send(rank - 1, 1, pack(&[&c_prev, &r, &g]))?;
    }
    Ok((q, r, g))
}

const DOWN_TAG: u32 = 1 << 16;

fn tree_tsqr(
    ex: &Exchange<'_>,
    x: &DenseMatrix,
    extra: Option<(&DenseMatrix, &DenseMatrix)>,
    gshape: (usize, usize),
) -> Result<TsqrParts, CommError> {
    let s = x.cols();
    let (q0, r0) = householder_qr_trapezoidal(x);
    let mut r = DenseMatrix::zeros(s, s);
    r.set_submatrix(0, 0, &r0);
    let mut qloc = DenseMatrix::zeros(x.rows(), s);
    qloc.set_submatrix(0, 0, &q0);
    let mut g = match extra {
        Some((a, b)) => gram(a, b).map_err(|e| ex.local(e))?,
        None => DenseMatrix::zeros(gshape.0, gshape.1),
    };

    let mut combines = Vec::new();
    let mut parent = None;
    for step in tree_steps(ex.rank(), ex.size()) {
        match step {
            TreeStep::Receive { from, round } => {
                let parts = unpack(&ex.recv(from, round)?, &[(s, s), gshape]).map_err(|e| ex.local(e))?;
                let stacked = DenseMatrix::vstack(&[&r, &parts[0]]).map_err(|e| ex.local(e))?;
                let (qc, rc) = householder_qr_trapezoidal(&stacked);
                combines.push((from, round, qc));
                r = rc;
                g.add_assign(&parts[1]).map_err(|e| ex.local(e))?;
            }
            TreeStep::Send { to, round } => {
                ex.send(to, round, pack(&[&r, &g]))?;
                parent = Some((to, round));
            }
        }
    }

    let (mut c, r, g) = match parent {
        Some((to, round)) => {
            let mut parts =
                unpack(&ex.recv(to, DOWN_TAG + round)?, &[(s, s), (s, s), gshape]).map_err(|e| ex.local(e))?;
            let g = parts.pop().expect("three parts");
            let r = parts.pop().expect("three parts");
            (parts.pop().expect("three parts"), r, g)
        }
        None => (DenseMatrix::identity(s), r, g),
    };
    for (from, round, qc) in combines.into_iter().rev() {
        let top = qc.row_range(0..s);
        let bottom = qc.row_range(s..2 * s);
        let child = bottom.matmul(&c).map_err(|e| ex.local(e))?;
        c = top.matmul(&c).map_err(|e| ex.local(e))?;
        ex.send(from, DOWN_TAG + round, pack(&[&child, &r, &g]))?;
    }
    let q = qloc.matmul(&c).map_err(|e| ex.local(e))?;
    Ok((q, r, g))
}
