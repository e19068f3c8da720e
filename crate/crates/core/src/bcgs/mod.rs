//! The block classical Gram-Schmidt family and a driver that runs any of
//! them over the simulated process grid.

mod variants;

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::comm::{run_spmd, SpmdConfig, SyncStats};
use crate::dense::{DenseMatrix, UpperTriangular, UNIT_ROUNDOFF};
use crate::distblock::{digest, DistBlockMatrix};
use crate::error::Error;
use crate::intraorth::IntraorthKind;

pub use variants::factor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VariantId {
    /// Classic block Gram-Schmidt: one projection and one
    /// intraorthogonalization per block.
    Bcgs,
    /// Reorthogonalized block Gram-Schmidt: two projection plus TSQR passes
    /// per block.
    BcgsIro,
    /// Two-sync reorthogonalized variant with Pythagorean Cholesky at both
    /// passes.
    BcgsPipIro,
    /// One-sync variant: delayed normalization with Pythagorean Cholesky in
    /// the first pass.
    BcgsIroP1s,
    /// Two-sync variant: like the one-sync variant but the first pass uses
    /// TSQR.
    BcgsIroP2s,
    /// One-sync variant without the first-pass Cholesky (also known as
    /// the low-sync BCGSI+LS).
    BcgsIro1s,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StabilityClass {
    /// Loss of orthogonality `O(u)`.
    Unit,
    /// Loss of orthogonality `O(u) kappa^2`.
    KappaSquared,
    /// No bound on the loss of orthogonality.
    Unstable,
}

/// Conditioning hypothesis `O(u) kappa^p <= 1` under which a variant's
/// loss-of-orthogonality bound holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Assumption {
    None,
    KappaPower(u32),
}

impl Assumption {
    pub fn text(&self) -> &'static str {
        match self {
            Assumption::None => "none",
            Assumption::KappaPower(1) => "O(u)κ(X) ≤ 1",
            Assumption::KappaPower(2) => "O(u)κ²(X) ≤ 1",
            Assumption::KappaPower(3) => "O(u)κ³(X) ≤ 1",
            Assumption::KappaPower(_) => "O(u)κ^p(X) ≤ 1",
        }
    }

    /// Whether `u * kappa^p <= margin`. `margin` stands in for the unstated
    /// constant inside `O(u)`.
    pub fn holds(&self, kappa: f64, margin: f64) -> bool {
        match self {
            Assumption::None => true,
            Assumption::KappaPower(p) => UNIT_ROUNDOFF * kappa.powi(*p as i32) <= margin,
        }
    }
}

impl VariantId {
    pub const ALL: [VariantId; 6] = [
        VariantId::Bcgs,
        VariantId::BcgsIro,
        VariantId::BcgsPipIro,
        VariantId::BcgsIroP1s,
        VariantId::BcgsIroP2s,
        VariantId::BcgsIro1s,
    ];

    /// The low-sync variants compared against BCGSI+.
    pub const LOW_SYNC: [VariantId; 4] = [
        VariantId::BcgsPipIro,
        VariantId::BcgsIroP1s,
        VariantId::BcgsIroP2s,
        VariantId::BcgsIro1s,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            VariantId::Bcgs => "BCGS",
            VariantId::BcgsIro => "BCGSI+",
            VariantId::BcgsPipIro => "BCGSPIPI+",
            VariantId::BcgsIroP1s => "BCGSI+P-1S",
            VariantId::BcgsIroP2s => "BCGSI+P-2S",
            VariantId::BcgsIro1s => "BCGSI+1S",
        }
    }

    /// Lower-case identifier used on the command line and in reports.
    pub fn id(&self) -> &'static str {
        match self {
            VariantId::Bcgs => "bcgs",
            VariantId::BcgsIro => "bcgsi+",
            VariantId::BcgsPipIro => "bcgspipi+",
            VariantId::BcgsIroP1s => "bcgsi+p-1s",
            VariantId::BcgsIroP2s => "bcgsi+p-2s",
            VariantId::BcgsIro1s => "bcgsi+1s",
        }
    }

    /// Exact number of synchronizations for `q` block columns.
    pub fn expected_syncs(&self, q: usize) -> usize {
        let q = q.max(1);
        match self {
            VariantId::BcgsIroP1s | VariantId::BcgsIro1s => q,
            VariantId::Bcgs | VariantId::BcgsPipIro | VariantId::BcgsIroP2s => 2 * q - 1,
            VariantId::BcgsIro => 4 * q - 3,
        }
    }

    /// Synchronizations per block column as `q` grows.
    pub fn syncs_per_block(&self) -> usize {
        match self {
            VariantId::BcgsIroP1s | VariantId::BcgsIro1s => 1,
            VariantId::Bcgs | VariantId::BcgsPipIro | VariantId::BcgsIroP2s => 2,
            VariantId::BcgsIro => 4,
        }
    }

    pub fn stability(&self) -> StabilityClass {
        match self {
            VariantId::Bcgs => StabilityClass::Unstable,
            VariantId::BcgsIro1s => StabilityClass::KappaSquared,
            _ => StabilityClass::Unit,
        }
    }

    pub fn assumption(&self) -> Assumption {
        match self {
            VariantId::Bcgs => Assumption::None,
            VariantId::BcgsIro | VariantId::BcgsIroP2s => Assumption::KappaPower(1),
            VariantId::BcgsPipIro | VariantId::BcgsIroP1s => Assumption::KappaPower(2),
            VariantId::BcgsIro1s => Assumption::KappaPower(3),
        }
    }
}

impl fmt::Display for VariantId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for VariantId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl FromStr for VariantId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        if key == "bcgsi+ls" || key == "bcgsi+p-ls" {
            return Ok(VariantId::BcgsIro1s);
        }
        VariantId::ALL.into_iter().find(|v| v.id() == key).ok_or_else(|| {
            let known: Vec<&str> = VariantId::ALL.iter().map(VariantId::id).collect();
            format!("unknown variant '{s}' (expected one of {})", known.join(", "))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BcgsOptions {
    /// Intraorthogonalization used by classic BCGS. The other variants fix
    /// their own.
    pub intra: IntraorthKind,
}

/// One rank's view of a finished factorization.
#[derive(Clone, Debug, PartialEq)]
pub struct BcgsResult {
    pub variant: VariantId,
    pub q: DistBlockMatrix,
    pub r: UpperTriangular,
    /// Synchronizations issued by the factorization alone.
    pub stats: SyncStats,
    /// For each block `k >= 1`, the first-pass projection coefficients the
    /// variant used in place of `Q_{0:k}^T X_k` (index `k - 1`).
    pub projections: Vec<DenseMatrix>,
}

/// A factorization reassembled from all ranks.
#[derive(Clone, Debug, PartialEq)]
pub struct Factorization {
    pub variant: VariantId,
    pub q: DenseMatrix,
    pub r: UpperTriangular,
    pub stats: SyncStats,
    pub projections: Vec<DenseMatrix>,
}

/// Distributes `x` over `procs` simulated ranks, factors it and stacks the
/// shards of `Q` back together. No collective is spent on reassembly.
pub fn factor_dense(
    variant: VariantId,
    x: &DenseMatrix,
    s: usize,
    procs: usize,
    config: &SpmdConfig,
    opts: BcgsOptions,
) -> Result<Factorization, Error> {
    let run = run_spmd(procs, config, |c| {
        let d = DistBlockMatrix::distribute(x, s, c)?;
        factor(variant, &d, c, opts)
    })?;
    let mut shards = Vec::with_capacity(procs);
    for res in run.results {
        shards.push(res?);
    }
    let first = &shards[0];
    let reference = digest(first.r.as_dense());
    if let Some(rank) = shards.iter().position(|sh| digest(sh.r.as_dense()) != reference) {
        return Err(Error::ReplicaMismatch { rank });
    }
    let locals: Vec<&DenseMatrix> = shards.iter().map(|sh| sh.q.local()).collect();
    let q = DenseMatrix::vstack(&locals)?;
    let first = shards.swap_remove(0);
    Ok(Factorization {
        variant,
        q,
        r: first.r,
        stats: first.stats,
        projections: first.projections,
    })
}
