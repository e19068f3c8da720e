//! Communication fabric: a per-rank [`Communicator`] handle with collective
//! operations, a serial backend and an in-process simulated backend where
//! each rank is a worker thread with its own mailbox.
//!
//! Every collective is one synchronization event in [`SyncStats`], however
//! many point-to-point messages it exchanges internally. Algorithms built on
//! top of this module communicate only through collectives.

mod spmd;
mod stats;

use std::cell::{Cell, RefCell};
use std::collections::VecDeque;
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dense::{DenseMatrix, LinalgError};

pub use spmd::{
    deadlock_budget_from, run_spmd, SpmdConfig, SpmdError, SpmdRun, DEADLOCK_BUDGET_ENV, DEFAULT_DEADLOCK_BUDGET,
};
pub use stats::{LabelStats, SyncStats};

/// How reductions combine per-rank contributions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// Contributions are folded into one running accumulator that travels
    /// through the ranks in order `0..P`. Results are bitwise independent of
    /// the process count.
    #[default]
    RankOrdered,
    /// Binary-tree pairwise combination, `ceil(log2 P)` rounds. Results agree
    /// across process counts only to rounding.
    Tree,
}

impl std::str::FromStr for Reduction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rank-ordered" | "rank_ordered" | "ordered" | "chain" => Ok(Reduction::RankOrdered),
            "tree" => Ok(Reduction::Tree),
            other => Err(format!("unknown reduction '{other}' (expected rank-ordered or tree)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CommError {
    #[error(
        "rank {rank}: no message from rank {peer} within {waited_ms} ms during '{label}' (collective arity mismatch?)"
    )]
    Deadlock {
        rank: usize,
        peer: usize,
        label: String,
        waited_ms: u64,
    },
    #[error("'{label}': rank {rank} contributed {found:?} but rank {reference_rank} contributed {expected:?}")]
    ShapeMismatch {
        label: String,
        rank: usize,
        reference_rank: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("rank {rank} is in collective '{expected}' but rank {peer} issued '{found}'")]
    CollectiveMismatch {
        rank: usize,
        peer: usize,
        expected: String,
        found: String,
    },
    #[error("rank {rank}: collective aborted by rank {origin}: {reason}")]
    Aborted { rank: usize, origin: usize, reason: String },
    #[error("rank {rank}: peer rank {origin} panicked")]
    PeerPanicked { rank: usize, origin: usize },
    #[error("rank {rank}: peer rank {peer} has exited")]
    PeerGone { rank: usize, peer: usize },
    #[error("rank {rank}: local computation inside a collective failed: {source}")]
    Local { rank: usize, source: LinalgError },
    #[error("point-to-point messaging is not available on the serial backend")]
    SerialPeer,
}

const BROADCAST_TAG: u32 = u32::MAX;
const FATAL_SEQ: u64 = u64::MAX;

enum Body {
    Data(DenseMatrix),
    Abort { reason: String },
    Fatal,
}

struct Envelope {
    src: usize,
    seq: u64,
    tag: u32,
    label: Arc<str>,
    body: Body,
}

struct Link {
    inbox: Receiver<Envelope>,
    peers: Vec<Sender<Envelope>>,
    pending: RefCell<VecDeque<Envelope>>,
    budget: Duration,
    first_panic: Arc<Mutex<Option<usize>>>,
}

/// Per-rank handle to the communication fabric.
///
/// Not `Sync`: each worker owns exactly one. Collectives must be issued by
/// every rank in the same order.
pub struct Communicator {
    rank: usize,
    size: usize,
    reduction: Reduction,
    link: Option<Link>,
    seq: Cell<u64>,
    stats: RefCell<SyncStats>,
}

impl Communicator {
    /// Single-process backend. Collectives complete locally but are counted
    /// exactly as a distributed run would count them.
    pub fn serial() -> Self {
        Self::serial_with(Reduction::default())
    }

    pub fn serial_with(reduction: Reduction) -> Self {
        Self {
            rank: 0,
            size: 1,
            reduction,
            link: None,
            seq: Cell::new(0),
            stats: RefCell::new(SyncStats::default()),
        }
    }

    fn simulated(
        rank: usize,
        size: usize,
        reduction: Reduction,
        inbox: Receiver<Envelope>,
        peers: Vec<Sender<Envelope>>,
        budget: Duration,
        first_panic: Arc<Mutex<Option<usize>>>,
    ) -> Self {
        Self {
            rank,
            size,
            reduction,
            link: Some(Link {
                inbox,
                peers,
                pending: RefCell::new(VecDeque::new()),
                budget,
                first_panic,
            }),
            seq: Cell::new(0),
            stats: RefCell::new(SyncStats::default()),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn reduction(&self) -> Reduction {
        self.reduction
    }

    pub fn is_serial(&self) -> bool {
        self.link.is_none()
    }

    /// Snapshot of this rank's synchronization counters.
    pub fn stats(&self) -> SyncStats {
        self.stats.borrow().clone()
    }

    pub fn reset_stats(&self) {
        self.stats.borrow_mut().reset();
    }

    /// Runs `body` as one synchronization event labelled `label`.
    ///
    /// `words` is the number of values the event combines and `tree_rounds`
    /// the number of pairwise-combine rounds it performs; both only feed the
    /// counters. Inside `body` the [`Exchange`] gives point-to-point access
    /// scoped to this event.
    pub fn collective<T>(
        &self,
        label: &str,
        words: usize,
        tree_rounds: u32,
        body: impl FnOnce(&Exchange<'_>) -> Result<T, CommError>,
    ) -> Result<T, CommError> {
        let seq = self.seq.get() + 1;
        self.seq.set(seq);
        self.stats.borrow_mut().record(label, words, tree_rounds);
        let ex = Exchange {
            comm: self,
            seq,
            label: Arc::from(label),
        };
        body(&ex)
    }

    /// Elementwise sum of `local` over all ranks, added in rank order
    /// `((l0 + l1) + l2) + ...`. Every rank receives the same bits.
    pub fn allreduce_sum(&self, local: &DenseMatrix, label: &str) -> Result<DenseMatrix, CommError> {
        let words = local.rows() * local.cols();
        self.collective(label, words, 0, |ex| {
            if self.size == 1 {
                return Ok(local.clone());
            }
            if self.rank == 0 {
                let mut acc = local.clone();
                for r in 1..self.size {
                    let m = ex.recv(r, 0)?;
                    if m.shape() != acc.shape() {
                        return Err(ex.abort(CommError::ShapeMismatch {
                            label: label.to_owned(),
                            rank: r,
                            reference_rank: 0,
                            expected: acc.shape(),
                            found: m.shape(),
                        }));
                    }
                    acc.add_assign(&m).map_err(|e| ex.local(e))?;
                }
                ex.broadcast_from_self(&acc)?;
                Ok(acc)
            } else {
                ex.send(0, 0, local.clone())?;
                ex.recv(0, BROADCAST_TAG)
            }
        })
    }

    /// Sum over ranks where every rank adds its contribution directly into a
    /// single running accumulator passed along in rank order.
    ///
    /// `contribute` receives the accumulator (zeros on rank 0) and must add
    /// this rank's share in place. When each rank continues per-entry running
    /// sums over its own rows (see [`crate::dense::gram_accumulate`]) the
    /// result is bitwise identical to the serial computation for every
    /// process count.
    pub fn allreduce_accumulate(
        &self,
        shape: (usize, usize),
        label: &str,
        contribute: impl FnOnce(&mut DenseMatrix) -> Result<(), LinalgError>,
    ) -> Result<DenseMatrix, CommError> {
        self.collective(label, shape.0 * shape.1, 0, |ex| {
            let mut acc = if self.rank == 0 {
                DenseMatrix::zeros(shape.0, shape.1)
            } else {
                let m = ex.recv(self.rank - 1, 0)?;
                if m.shape() != shape {
                    return Err(ex.abort(CommError::ShapeMismatch {
                        label: label.to_owned(),
                        rank: self.rank,
                        reference_rank: self.rank - 1,
                        expected: m.shape(),
                        found: shape,
                    }));
                }
                m
            };
            contribute(&mut acc).map_err(|e| ex.local(e))?;
            if self.rank + 1 < self.size {
                ex.send(self.rank + 1, 0, acc)?;
                ex.recv(self.size - 1, BROADCAST_TAG)
            } else {
                ex.broadcast_from_self(&acc)?;
                Ok(acc)
            }
        })
    }

    /// Binary-tree reduction of per-rank factors followed by a broadcast of
    /// the root value. The lower rank's value is always the first argument
    /// of `combine`. The whole operation is one synchronization event with
    /// `ceil(log2 P)` combine rounds.
    pub fn reduce_factor_tree(
        &self,
        local: &DenseMatrix,
        label: &str,
        mut combine: impl FnMut(&DenseMatrix, &DenseMatrix) -> Result<DenseMatrix, LinalgError>,
    ) -> Result<DenseMatrix, CommError> {
        let rounds = tree_rounds(self.size);
        self.collective(label, local.rows() * local.cols(), rounds, |ex| {
            let mut acc = local.clone();
            for step in tree_steps(self.rank, self.size) {
                match step {
                    TreeStep::Receive { from, round } => {
                        let m = ex.recv(from, round)?;
                        if m.shape() != local.shape() {
                            return Err(ex.abort(CommError::ShapeMismatch {
                                label: label.to_owned(),
                                rank: from,
                                reference_rank: self.rank,
                                expected: local.shape(),
                                found: m.shape(),
                            }));
                        }
                        acc = combine(&acc, &m).map_err(|e| ex.local(e))?;
                    }
                    TreeStep::Send { to, round } => {
                        ex.send(to, round, acc)?;
                        return ex.recv(0, BROADCAST_TAG);
                    }
                }
            }
            ex.broadcast_from_self(&acc)?;
            Ok(acc)
        })
    }

    /// Stacks every rank's `local` rows in rank order and hands the result to
    /// all ranks. Intended for tests and I/O; counted like any collective.
    pub fn gather_rows(&self, local: &DenseMatrix, label: &str) -> Result<DenseMatrix, CommError> {
        // the total row count is only known at the root, so no words are recorded
        self.collective(label, 0, 0, |ex| {
            if self.size == 1 {
                return Ok(local.clone());
            }
            if self.rank == 0 {
                let mut parts = vec![local.clone()];
                for r in 1..self.size {
                    let m = ex.recv(r, 0)?;
                    if m.cols() != local.cols() {
                        return Err(ex.abort(CommError::ShapeMismatch {
                            label: label.to_owned(),
                            rank: r,
                            reference_rank: 0,
                            expected: (m.rows(), local.cols()),
                            found: m.shape(),
                        }));
                    }
                    parts.push(m);
                }
                let refs: Vec<&DenseMatrix> = parts.iter().collect();
                let all = DenseMatrix::vstack(&refs).map_err(|e| ex.local(e))?;
                ex.broadcast_from_self(&all)?;
                Ok(all)
            } else {
                ex.send(0, 0, local.clone())?;
                ex.recv(0, BROADCAST_TAG)
            }
        })
    }
}

impl Drop for Communicator {
    fn drop(&mut self) {
        if !std::thread::panicking() {
            return;
        }
        if let Some(link) = &self.link {
            if let Ok(mut first) = link.first_panic.lock() {
                first.get_or_insert(self.rank);
            }
            for (r, peer) in link.peers.iter().enumerate() {
                if r != self.rank {
                    let _ = peer.send(Envelope {
                        src: self.rank,
                        seq: FATAL_SEQ,
                        tag: 0,
                        label: Arc::from("fatal"),
                        body: Body::Fatal,
                    });
                }
            }
        }
    }
}

/// Point-to-point access scoped to one collective.
pub struct Exchange<'a> {
    comm: &'a Communicator,
    seq: u64,
    label: Arc<str>,
}

impl Exchange<'_> {
    pub fn rank(&self) -> usize {
        self.comm.rank
    }

    pub fn size(&self) -> usize {
        self.comm.size
    }

    fn link(&self) -> Result<&Link, CommError> {
        self.comm.link.as_ref().ok_or(CommError::SerialPeer)
    }

    pub fn send(&self, dst: usize, tag: u32, m: DenseMatrix) -> Result<(), CommError> {
        let link = self.link()?;
        link.peers[dst]
            .send(Envelope {
                src: self.comm.rank,
                seq: self.seq,
                tag,
                label: self.label.clone(),
                body: Body::Data(m),
            })
            .map_err(|_| CommError::PeerGone {
                rank: self.comm.rank,
                peer: dst,
            })
    }

    fn broadcast_from_self(&self, m: &DenseMatrix) -> Result<(), CommError> {
        for r in 0..self.comm.size {
            if r != self.comm.rank {
                self.send(r, BROADCAST_TAG, m.clone())?;
            }
        }
        Ok(())
    }

    /// Blocks until the message tagged `tag` from `src` for this collective
    /// arrives, or until the deadlock budget runs out.
    pub fn recv(&self, src: usize, tag: u32) -> Result<DenseMatrix, CommError> {
        let link = self.link()?;
        let wanted = |e: &Envelope| {
            e.seq == FATAL_SEQ
                || (e.seq == self.seq && (matches!(e.body, Body::Abort { .. }) || (e.src == src && e.tag == tag)))
        };
        let found = {
            let mut pending = link.pending.borrow_mut();
            pending.iter().position(wanted).and_then(|i| pending.remove(i))
        };
        if let Some(env) = found {
            return self.open(env);
        }
        let started = Instant::now();
        let deadline = started + link.budget;
        loop {
            let now = Instant::now();
            let timeout = deadline.saturating_duration_since(now);
            match link.inbox.recv_timeout(timeout) {
                Ok(env) if wanted(&env) => return self.open(env),
                Ok(env) => link.pending.borrow_mut().push_back(env),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(CommError::Deadlock {
                        rank: self.comm.rank,
                        peer: src,
                        label: self.label.to_string(),
                        waited_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(CommError::PeerGone {
                        rank: self.comm.rank,
                        peer: src,
                    })
                }
            }
        }
    }

    fn open(&self, env: Envelope) -> Result<DenseMatrix, CommError> {
        match env.body {
            Body::Fatal => Err(CommError::PeerPanicked {
                rank: self.comm.rank,
                origin: env.src,
            }),
            Body::Abort { reason } => Err(CommError::Aborted {
                rank: self.comm.rank,
                origin: env.src,
                reason,
            }),
            Body::Data(_) if env.label != self.label => Err(self.abort(CommError::CollectiveMismatch {
                rank: self.comm.rank,
                peer: env.src,
                expected: self.label.to_string(),
                found: env.label.to_string(),
            })),
            Body::Data(m) => Ok(m),
        }
    }

    /// Tells every other rank that this collective failed and returns `err`
    /// for propagation.
    pub fn abort(&self, err: CommError) -> CommError {
        if let Some(link) = &self.comm.link {
            for (r, peer) in link.peers.iter().enumerate() {
                if r != self.comm.rank {
                    let _ = peer.send(Envelope {
                        src: self.comm.rank,
                        seq: self.seq,
                        tag: 0,
                        label: self.label.clone(),
                        body: Body::Abort {
                            reason: err.to_string(),
                        },
                    });
                }
            }
        }
        err
    }

    /// Wraps a local kernel failure and aborts the collective.
    pub fn local(&self, source: LinalgError) -> CommError {
        self.abort(CommError::Local {
            rank: self.comm.rank,
            source,
        })
    }
}

/// Concatenates the column-major data of several matrices into one column so
/// that they travel in a single message.
pub fn pack(parts: &[&DenseMatrix]) -> DenseMatrix {
    let data: Vec<f64> = parts.iter().flat_map(|m| m.as_slice().iter().copied()).collect();
    let len = data.len();
    DenseMatrix::from_col_major(len, 1, data).expect("packed length")
}

/// Splits a [`pack`]ed column back into matrices of the given shapes.
pub fn unpack(packed: &DenseMatrix, shapes: &[(usize, usize)]) -> Result<Vec<DenseMatrix>, LinalgError> {
    let total: usize = shapes.iter().map(|(r, c)| r * c).sum();
    if packed.as_slice().len() != total {
        return Err(LinalgError::DimensionMismatch {
            op: "unpack",
            expected: (total, 1),
            found: packed.shape(),
        });
    }
    let mut offset = 0;
    shapes
        .iter()
        .map(|&(r, c)| {
            let m = DenseMatrix::from_col_major(r, c, packed.as_slice()[offset..offset + r * c].to_vec());
            offset += r * c;
            m
        })
        .collect()
}

/// `ceil(log2 size)`.
pub fn tree_rounds(size: usize) -> u32 {
    if size <= 1 {
        0
    } else {
        usize::BITS - (size - 1).leading_zeros()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeStep {
    Receive { from: usize, round: u32 },
    Send { to: usize, round: u32 },
}

/// This rank's part of the binary reduction tree, in execution order. Rank
/// `r` receives from `r + 2^d` in round `d` while `r` is a multiple of
/// `2^(d+1)`, and otherwise sends to `r - 2^d` and stops.
pub fn tree_steps(rank: usize, size: usize) -> Vec<TreeStep> {
    let mut steps = Vec::new();
    let mut stride = 1;
    let mut round = 0;
    while stride < size {
        if rank.is_multiple_of(2 * stride) {
            if rank + stride < size {
                steps.push(TreeStep::Receive {
                    from: rank + stride,
                    round,
                });
            }
        } else {
            steps.push(TreeStep::Send {
                to: rank - stride,
                round,
            });
            break;
        }
        stride *= 2;
        round += 1;
    }
    steps
}

#[cfg(test)]
mod tests;
