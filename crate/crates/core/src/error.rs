use std::fmt;

use crate::bcgs::VariantId;
use crate::comm::{CommError, SpmdError};
use crate::dense::LinalgError;

/// Where a Cholesky factorization broke down inside a variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CholSite {
    /// Pythagorean Cholesky of the unnormalized block (first pass).
    FirstPass,
    /// Pythagorean Cholesky of the reorthogonalized block (second pass).
    SecondPass,
    /// Cholesky QR used as the intraorthogonalization.
    Intra,
}

impl fmt::Display for CholSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CholSite::FirstPass => "first-pass Pythagorean Cholesky",
            CholSite::SecondPass => "second-pass Pythagorean Cholesky",
            CholSite::Intra => "Cholesky QR intraorthogonalization",
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Spmd(#[from] SpmdError),
    #[error(
        "{variant}: {site} broke down at block {block} (pivot {pivot}); the assumption {assumption} is likely violated"
    )]
    Breakdown {
        variant: VariantId,
        site: CholSite,
        /// 0-based block column index.
        block: usize,
        pivot: usize,
        assumption: &'static str,
    },
    #[error("rank deficient: {rows} rows by {cols} columns")]
    RankDeficient { rows: usize, cols: usize },
    #[error("shape: {0}")]
    Shape(String),
    #[error("rank {rank} holds a different replicated factor than rank 0")]
    ReplicaMismatch { rank: usize },
}

impl Error {
    /// True for a Cholesky breakdown, the failure a variant reports when its
    /// conditioning assumption does not hold.
    pub fn is_breakdown(&self) -> bool {
        matches!(
            self,
            Error::Breakdown { .. } | Error::Linalg(LinalgError::NotSpd { .. })
        )
    }
}
