//! Robust fuzzy clustering of multivariate time series by common principal
//! subspaces of their lagged covariance structure.
//!
//! Each series is summarised by `2p × 2p` block covariance matrices at lags
//! `1..=L`. Clusters are represented by the leading eigenvectors of
//! membership-weighted averages of those blocks, and a series belongs to a
//! cluster in proportion to how well that subspace reconstructs its lagged
//! embedding. Three robust variants are provided alongside the plain fuzzy
//! algorithm: an exponential loss, a noise cluster, and trimming.
//!
//! The crate is `no_std` (it needs `alloc`); file formats and the command line
//! live in the companion `rfcpca` crate.

#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod covariance;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod fit;
pub mod membership;
pub mod rng;
pub mod robust;
pub mod selection;
pub mod simgen;

pub use dataset::MtsDataset;
pub use error::{Error, Result};
pub use fit::{fit_fcpca, FitOptions, FitResult, PreparedDataset, VariantKind, VariantParams};
pub use membership::MembershipMatrix;
pub use robust::{fit_rfcpca_e, fit_rfcpca_n, fit_rfcpca_t, NoiseConfig, TrimLoss};
