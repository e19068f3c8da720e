//! Block classical Gram-Schmidt QR with low-synchronization variants over a
//! simulated row-distributed process grid.
//!
//! The crate is layered bottom-up: [`dense`] kernels, the [`comm`] fabric,
//! row-distributed block matrices in [`distblock`], single-block
//! factorizations in [`intraorth`], the variants in [`bcgs`] and the
//! benchmark support in [`harness`].

pub mod bcgs;
pub mod comm;
pub mod dense;
pub mod distblock;
mod error;
pub mod harness;
pub mod intraorth;

#[cfg(test)]
mod test_support;

pub use bcgs::{factor, factor_dense, BcgsOptions, BcgsResult, Factorization, VariantId};
pub use comm::{run_spmd, Communicator, Reduction, SpmdConfig, SyncStats};
pub use dense::{DenseMatrix, LinalgError, UpperTriangular};
pub use distblock::DistBlockMatrix;
pub use error::{CholSite, Error};
pub use intraorth::IntraorthKind;
