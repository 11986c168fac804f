//! Subspace diagnostics: principal angles and per-channel contributions.

use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::covariance::{weighted_common_covariance, Subspace};
use crate::error::{Error, Result};
use crate::fit::{FitResult, PreparedDataset, VariantParams};
use crate::membership::MembershipMatrix;

const ORTHONORMAL_TOL: f64 = 1e-8;

pub fn is_orthonormal(b: &DMatrix<f64>, tol: f64) -> bool {
    let g = b.tr_mul(b);
    let k = g.nrows();
    (0..k).all(|i| (0..k).all(|j| (g[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs() <= tol))
}

/// Principal angles between `span(a)` and `span(b)`, ascending, in `[0, π/2]`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: b.nrows() });
    }
    if !is_orthonormal(a, ORTHONORMAL_TOL) || !is_orthonormal(b, ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal);
    }
    let k = a.ncols().min(b.ncols());
    if k == 0 {
        return Ok(Vec::new());
    }
    let m = a.tr_mul(b);
    let sv = m.singular_values();
    let mut angles: Vec<f64> = sv.iter().take(k).map(|&s| libm::acos(s.clamp(0.0, 1.0))).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}

/// Squared row norms of `C`, one per row of the `2p`-dimensional embedding.
pub fn channel_contributions_raw(c: &DMatrix<f64>) -> Vec<f64> {
    c.row_iter().map(|r| r.norm_squared()).collect()
}

/// Per-channel share of the axes: past and future copies of channel `j` summed.
pub fn channel_contributions(c: &DMatrix<f64>, channels: usize) -> Result<Vec<f64>> {
    if c.nrows() != 2 * channels {
        return Err(Error::DimensionMismatch { expected: 2 * channels, found: c.nrows() });
    }
    let raw = channel_contributions_raw(c);
    Ok((0..channels).map(|j| raw[j] + raw[j + channels]).collect())
}

/// Subspace of the objects the noise cluster absorbed, one per lag, built from
/// the noise-membership column as weights.
pub fn noise_subspaces(prep: &PreparedDataset, fit: &FitResult) -> Result<Vec<Subspace>> {
    if !matches!(fit.params, VariantParams::Noise { .. }) {
        return Err(Error::InvalidParameter("noise subspaces need a noise-cluster fit"));
    }
    noise_subspaces_from(prep, &fit.memberships, fit.options.variance_fraction)
}

/// As [`noise_subspaces`], from memberships whose last column is the noise cluster.
pub fn noise_subspaces_from(prep: &PreparedDataset, u: &MembershipMatrix, variance_fraction: f64) -> Result<Vec<Subspace>> {
    if u.n_objects() != prep.len() {
        return Err(Error::DimensionMismatch { expected: prep.len(), found: u.n_objects() });
    }
    let weights = u.column(u.n_clusters() - 1);
    (1..=prep.max_lag())
        .map(|lag| {
            let blocks: Vec<&DMatrix<f64>> = (0..prep.len()).map(|i| prep.blocks(i).at(lag)).collect();
            let sigma = weighted_common_covariance(&blocks, &weights, u.fuzziness())?;
            Subspace::from_covariance(&sigma, variance_fraction)
        })
        .collect()
}
