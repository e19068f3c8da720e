use crate::comm::Communicator;
use crate::dense::{tri_solve_transposed_left, DenseMatrix, LinalgError, UpperTriangular};
use crate::distblock::{fused_gram, local_axpy_block, scale_right_block, DistBlockMatrix};
use crate::error::{CholSite, Error};
use crate::intraorth::{intraorth, pyth_chol, tsqr, tsqr_with_gram, IntraorthKind};

use super::{BcgsOptions, BcgsResult, VariantId};

/// Factors the distributed `x` (block width `s`, `q` blocks) with `variant`.
/// Every rank must call this with its own shard.
pub fn factor(
    variant: VariantId,
    x: &DistBlockMatrix,
    comm: &Communicator,
    opts: BcgsOptions,
) -> Result<BcgsResult, Error> {
    let q = x.block_count();
    let s = x.block_width();
    if q == 0 {
        return Err(Error::Shape("input has no block columns".into()));
    }
    if x.global_rows() < q * s {
        return Err(Error::RankDeficient {
            rows: x.global_rows(),
            cols: q * s,
        });
    }
    let before = comm.stats();
    let mut st = State::new(variant, x);
    if q == 1 {
        let kind = if variant == VariantId::Bcgs {
            opts.intra
        } else {
            IntraorthKind::Tsqr
        };
        st.first_block(kind, comm)?;
    } else {
        match variant {
            VariantId::Bcgs => classic(&mut st, x, comm, opts.intra)?,
            VariantId::BcgsIro => reorthogonalized(&mut st, x, comm)?,
            VariantId::BcgsPipIro => pythagorean_two_sync(&mut st, x, comm)?,
            VariantId::BcgsIroP1s => delayed(&mut st, x, comm, FirstPass::Pythagorean)?,
            VariantId::BcgsIroP2s => delayed(&mut st, x, comm, FirstPass::Tsqr)?,
            VariantId::BcgsIro1s => delayed(&mut st, x, comm, FirstPass::Skip)?,
        }
    }
    Ok(BcgsResult {
        variant,
        q: st.q,
        r: st.r,
        stats: comm.stats().since(&before),
        projections: st.projections,
    })
}

struct State<'a> {
    variant: VariantId,
    x: &'a DistBlockMatrix,
    q: DistBlockMatrix,
    r: UpperTriangular,
    projections: Vec<DenseMatrix>,
}

impl<'a> State<'a> {
    fn new(variant: VariantId, x: &'a DistBlockMatrix) -> Self {
        let (s, blocks) = (x.block_width(), x.block_count());
        Self {
            variant,
            x,
            q: DistBlockMatrix::zeros(x.layout(), s, blocks),
            r: UpperTriangular::zeros(s * blocks, s),
            projections: Vec::with_capacity(blocks.saturating_sub(1)),
        }
    }

    fn chol_error(&self, site: CholSite, block: usize) -> impl Fn(LinalgError) -> Error + '_ {
        move |e| match e {
            LinalgError::NotSpd { pivot } => Error::Breakdown {
                variant: self.variant,
                site,
                block,
                pivot,
                assumption: self.variant.assumption().text(),
            },
            other => Error::Linalg(other),
        }
    }

    fn intra_error(&self, block: usize) -> impl Fn(Error) -> Error + '_ {
        move |e| match e {
            Error::Linalg(l @ LinalgError::NotSpd { .. }) => self.chol_error(CholSite::Intra, block)(l),
            other => other,
        }
    }

    fn first_block(&mut self, kind: IntraorthKind, comm: &Communicator) -> Result<(), Error> {
        let qr = intraorth(kind, &self.x.block(0), comm, intra_label(kind)).map_err(self.intra_error(0))?;
        self.q.set_block(0, &qr.q)?;
        self.r.set_diagonal_block(0, &qr.r)?;
        Ok(())
    }

    /// `(U - Q_{0:k} Y) G^{-1}` on the local shard.
    fn complement(
        &self,
        u: &DistBlockMatrix,
        k: usize,
        y: &DenseMatrix,
        g: Option<&UpperTriangular>,
    ) -> Result<DistBlockMatrix, Error> {
        let mut w = u.clone();
        local_axpy_block(&mut w, self.q.blocks(0..k), y)?;
        if let Some(g) = g {
            scale_right_block(&mut w, g)?;
        }
        Ok(w)
    }

    /// Stores `Q_k` and the block column `R_{0:k,k} = S + Y S_kk`,
    /// `R_kk = Y_kk S_kk`.
    fn finish_block(
        &mut self,
        k: usize,
        qk: &DistBlockMatrix,
        s: &DenseMatrix,
        y: &DenseMatrix,
        skk: &UpperTriangular,
        ykk: &UpperTriangular,
    ) -> Result<(), Error> {
        self.q.set_block(k, qk)?;
        let above = s.add(&skk.left_mul(y)?)?;
        self.r.set_above_diagonal(k, &above)?;
        self.r.set_diagonal_block(k, &ykk.mul_upper(skk)?)?;
        Ok(())
    }
}

fn intra_label(kind: IntraorthKind) -> &'static str {
    match kind {
        IntraorthKind::Tsqr => "tsqr/intra",
        IntraorthKind::CholQr => "gram/cholqr",
    }
}

/// Splits a fused Gram buffer into its row band `rows` and column band
/// `cols`.
fn part(g: &DenseMatrix, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> DenseMatrix {
    g.submatrix(rows, cols)
}

fn classic(st: &mut State<'_>, x: &DistBlockMatrix, comm: &Communicator, intra: IntraorthKind) -> Result<(), Error> {
    st.first_block(intra, comm)?;
    for k in 1..x.block_count() {
        let mut w = x.block(k);
        let s = fused_gram(&[st.q.blocks(0..k)], &[w.all()], comm, "gram/project")?.into_inner();
        local_axpy_block(&mut w, st.q.blocks(0..k), &s)?;
        let qr = intraorth(intra, &w, comm, intra_label(intra)).map_err(st.intra_error(k))?;
        st.q.set_block(k, &qr.q)?;
        st.r.set_above_diagonal(k, &s)?;
        st.r.set_diagonal_block(k, &qr.r)?;
        st.projections.push(s);
    }
    Ok(())
}

fn reorthogonalized(st: &mut State<'_>, x: &DistBlockMatrix, comm: &Communicator) -> Result<(), Error> {
    st.first_block(IntraorthKind::Tsqr, comm)?;
    for k in 1..x.block_count() {
        let xk = x.block(k);
        let s1 = fused_gram(&[st.q.blocks(0..k)], &[xk.all()], comm, "gram/project")?.into_inner();
        let w = st.complement(&xk, k, &s1, None)?;
        let first = tsqr(&w, comm, "tsqr/first-pass")?;
        let s2 = fused_gram(&[st.q.blocks(0..k)], &[first.q.all()], comm, "gram/reproject")?.into_inner();
        let v = st.complement(&first.q, k, &s2, None)?;
        let second = tsqr(&v, comm, "tsqr/second-pass")?;
        st.finish_block(k, &second.q, &s1, &s2, &first.r, &second.r)?;
        st.projections.push(s1);
    }
    Ok(())
}

fn pythagorean_two_sync(st: &mut State<'_>, x: &DistBlockMatrix, comm: &Communicator) -> Result<(), Error> {
    let s = x.block_width();
    st.first_block(IntraorthKind::Tsqr, comm)?;
    for k in 1..x.block_count() {
        let ks = k * s;
        let xk = x.block(k);
        let g1 = fused_gram(&[st.q.blocks(0..k), xk.all()], &[xk.all()], comm, "gram/first-pass")?.into_inner();
        let sk = part(&g1, 0..ks, 0..s);
        let t = part(&g1, ks..ks + s, 0..s);
        let skk = pyth_chol(&t, &sk).map_err(st.chol_error(CholSite::FirstPass, k))?;
        let u = st.complement(&xk, k, &sk, Some(&skk))?;

        let g2 = fused_gram(&[st.q.blocks(0..k), u.all()], &[u.all()], comm, "gram/second-pass")?.into_inner();
        let y = part(&g2, 0..ks, 0..s);
        let omega = part(&g2, ks..ks + s, 0..s);
        let ykk = pyth_chol(&omega, &y).map_err(st.chol_error(CholSite::SecondPass, k))?;
        let qk = st.complement(&u, k, &y, Some(&ykk))?;
        st.finish_block(k, &qk, &sk, &y, &skk, &ykk)?;
        st.projections.push(sk);
    }
    Ok(())
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum FirstPass {
    /// Pythagorean Cholesky of the projected block, reusing the fused Gram
    /// buffer.
    Pythagorean,
    /// TSQR of the projected block, one extra synchronization.
    Tsqr,
    /// No first-pass normalization: the projected block is carried
    /// unnormalized and its diagonal factor is the identity.
    Skip,
}

/// Normalizes the projected block `X_k - Q_{0:k} S` according to `mode`.
/// `t` is `X_k^T X_k` when the mode needs it.
fn first_pass(
    st: &State<'_>,
    mode: FirstPass,
    k: usize,
    sk: &DenseMatrix,
    t: Option<&DenseMatrix>,
    comm: &Communicator,
) -> Result<(DistBlockMatrix, UpperTriangular), Error> {
    let xk = st.x.block(k);
    let s = st.x.block_width();
    match mode {
        FirstPass::Pythagorean => {
            let t = t.expect("Pythagorean first pass needs the Gram block of X_k");
            let skk = pyth_chol(t, sk).map_err(st.chol_error(CholSite::FirstPass, k))?;
            Ok((st.complement(&xk, k, sk, Some(&skk))?, skk))
        }
        FirstPass::Skip => Ok((st.complement(&xk, k, sk, None)?, UpperTriangular::identity(s))),
        FirstPass::Tsqr => {
            let w = st.complement(&xk, k, sk, None)?;
            let qr = tsqr(&w, comm, "tsqr/first-pass")?;
            Ok((qr.q, qr.r))
        }
    }
}

/// The delayed-normalization family. Block `k`'s second pass and block
/// `k + 1`'s projection share one fused reduction; the part of
/// `Q_{0:k+1}^T X_{k+1}` against the not yet normalized `Q_k` comes from
/// `Q_k^T X_{k+1} = Y_kk^{-T} (U_k^T X_{k+1} - Y^T Q_{0:k}^T X_{k+1})`.
fn delayed(st: &mut State<'_>, x: &DistBlockMatrix, comm: &Communicator, mode: FirstPass) -> Result<(), Error> {
    let s = x.block_width();
    let q = x.block_count();
    let pyth = mode == FirstPass::Pythagorean;

    // Prologue: TSQR of X_0 with X_0^T [X_1] (and X_1^T X_1) riding on the
    // same reduction; Q_0^T X_1 = R_00^{-T} X_0^T X_1.
    let x0 = x.block(0);
    let x1 = x.block(1);
    let (qr0, g) = if pyth {
        tsqr_with_gram(&x0, &[x0.all(), x1.all()], &[x1.all()], comm, "tsqr/prologue")?
    } else {
        tsqr_with_gram(&x0, &[x0.all()], &[x1.all()], comm, "tsqr/prologue")?
    };
    st.q.set_block(0, &qr0.q)?;
    st.r.set_diagonal_block(0, &qr0.r)?;
    let mut sk = tri_solve_transposed_left(&qr0.r, &part(&g, 0..s, 0..s))?;
    let t1 = pyth.then(|| part(&g, s..2 * s, 0..s));
    st.projections.push(sk.clone());
    let (mut u, mut skk) = first_pass(st, mode, 1, &sk, t1.as_ref(), comm)?;

    for k in 1..q {
        let ks = k * s;
        let next = (k + 1 < q).then(|| x.block(k + 1));
        let qk = st.q.blocks(0..k);
        let buf = match &next {
            Some(xn) if pyth => fused_gram(&[qk, u.all(), xn.all()], &[u.all(), xn.all()], comm, "gram/fused")?,
            Some(xn) => fused_gram(&[qk, u.all()], &[u.all(), xn.all()], comm, "gram/fused")?,
            None => fused_gram(&[qk, u.all()], &[u.all()], comm, "gram/fused")?,
        }
        .into_inner();
        let y = part(&buf, 0..ks, 0..s);
        let omega = part(&buf, ks..ks + s, 0..s);
        let ykk = pyth_chol(&omega, &y).map_err(st.chol_error(CholSite::SecondPass, k))?;
        let qblock = st.complement(&u, k, &y, Some(&ykk))?;
        st.finish_block(k, &qblock, &sk, &y, &skk, &ykk)?;

        if next.is_some() {
            let z = part(&buf, 0..ks, s..2 * s);
            let p = part(&buf, ks..ks + s, s..2 * s);
            let t = pyth.then(|| part(&buf, ks + s..ks + 2 * s, s..2 * s));
            let w = tri_solve_transposed_left(&ykk, &p.sub(&crate::dense::gram(&y, &z)?)?)?;
            sk = DenseMatrix::vstack(&[&z, &w])?;
            st.projections.push(sk.clone());
            (u, skk) = first_pass(st, mode, k + 1, &sk, t.as_ref(), comm)?;
        }
    }
    Ok(())
}
