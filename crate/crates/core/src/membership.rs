//! Fuzzy membership matrices and the closed-form membership updates.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

/// Row-stochastic `N × S` matrix of fuzzy memberships together with the
/// fuzziness exponent `m` it is used with.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    values: DMatrix<f64>,
    fuzziness: f64,
}

impl MembershipMatrix {
    /// Wraps `values` after checking the entries lie in `[0, 1]` and every row sums to one.
    pub fn new(values: DMatrix<f64>, fuzziness: f64) -> Result<Self> {
        check_fuzziness(fuzziness)?;
        if values.ncols() == 0 {
            return Err(Error::InvalidShape("membership matrix needs at least one cluster"));
        }
        for row in values.row_iter() {
            if row.iter().any(|&u| !(0.0..=1.0).contains(&u)) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidShape("membership rows must be stochastic"));
            }
        }
        Ok(Self { values, fuzziness })
    }

    pub(crate) fn from_raw(values: DMatrix<f64>, fuzziness: f64) -> Self {
        Self { values, fuzziness }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn fuzziness(&self) -> f64 {
        self.fuzziness
    }

    pub fn n_objects(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_clusters(&self) -> usize {
        self.values.ncols()
    }

    pub fn get(&self, i: usize, s: usize) -> f64 {
        self.values[(i, s)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().copied().collect()
    }

    /// Column `s` as a vector of weights.
    pub fn column(&self, s: usize) -> Vec<f64> {
        self.values.column(s).iter().copied().collect()
    }

    /// Reorders clusters: output column `j` is input column `perm[j]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.values.nrows();
        Self {
            values: DMatrix::from_fn(n, perm.len(), |i, j| self.values[(i, perm[j])]),
            fuzziness: self.fuzziness,
        }
    }

    /// Cluster with the largest membership for each object; ties go to the lower index.
    pub fn argmax_labels(&self) -> Vec<usize> {
        self.values.row_iter().map(|r| argmax(r.iter().copied())).collect()
    }
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (j, v) in values.enumerate() {
        if v > best_value {
            best = j;
            best_value = v;
        }
    }
    best
}

pub(crate) fn check_fuzziness(m: f64) -> Result<()> {
    if m > 1.0 && m.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter("fuzziness m must be greater than 1"))
    }
}

/// Random initial memberships: each row is `S` i.i.d. uniforms divided by their sum.
pub fn init_memberships(n: usize, s: usize, fuzziness: f64, seed: u64) -> Result<MembershipMatrix> {
    check_fuzziness(fuzziness)?;
    if s < 1 || s > n {
        return Err(Error::InvalidShape("need 1 <= clusters <= objects"));
    }
    let mut r = rng::seeded(seed);
    let mut values = DMatrix::zeros(n, s);
    for i in 0..n {
        if s == 1 {
            values[(i, 0)] = 1.0;
            continue;
        }
        let draws: Vec<f64> = (0..s).map(|_| 1.0 - r.random::<f64>()).collect();
        let total: f64 = draws.iter().sum();
        for (j, d) in draws.iter().enumerate() {
            values[(i, j)] = d / total;
        }
    }
    Ok(MembershipMatrix::from_raw(values, fuzziness))
}

/// Inverse-ratio membership rule applied to one row of non-negative losses:
/// `u_s = [Σ_s' (loss_s / loss_s')^{1/(m-1)}]^{-1}`. Zero losses take all the
/// mass, split equally when several are zero.
pub(crate) fn row_memberships(losses: &[f64], m: f64) -> Vec<f64> {
    let zeros = losses.iter().filter(|&&l| l == 0.0).count();
    if zeros > 0 {
        let share = 1.0 / zeros as f64;
        return losses.iter().map(|&l| if l == 0.0 { share } else { 0.0 }).collect();
    }
    let q = 1.0 / (m - 1.0);
    losses
        .iter()
        .map(|&ls| {
            let denom: f64 = losses.iter().map(|&lo| libm::pow(ls / lo, q)).sum();
            1.0 / denom
        })
        .collect()
}

fn memberships_from_losses(losses: &DMatrix<f64>, m: f64) -> MembershipMatrix {
    let (n, s) = losses.shape();
    let mut values = DMatrix::zeros(n, s);
    let mut row = vec![0.0; s];
    for i in 0..n {
        for j in 0..s {
            row[j] = losses[(i, j)];
        }
        for (j, u) in row_memberships(&row, m).into_iter().enumerate() {
            values[(i, j)] = u;
        }
    }
    MembershipMatrix::from_raw(values, m)
}

/// Membership update for the squared reconstruction loss.
pub fn update_memberships_fcpca(errors: &DMatrix<f64>, m: f64) -> Result<MembershipMatrix> {
    check_fuzziness(m)?;
    Ok(memberships_from_losses(errors, m))
}

/// `1 − exp(−β r²)`, the bounded exponential loss.
pub fn exponential_loss(beta: f64, r2: f64) -> f64 {
    -libm::expm1(-beta * r2)
}

/// Membership update for the exponential loss `1 − exp(−β r²)`.
pub fn update_memberships_exponential(errors: &DMatrix<f64>, m: f64, beta: f64) -> Result<MembershipMatrix> {
    check_fuzziness(m)?;
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive"));
    }
    Ok(memberships_from_losses(&errors.map(|r| exponential_loss(beta, r)), m))
}

/// Membership update with a noise cluster. `errors` holds the regular clusters
/// only; the returned matrix has one extra, last column for the noise cluster.
pub fn update_memberships_noise(errors: &DMatrix<f64>, m: f64, delta_sq: f64) -> Result<MembershipMatrix> {
    check_fuzziness(m)?;
    if !(delta_sq > 0.0) {
        return Err(Error::InvalidParameter("noise distance must be positive"));
    }
    let (n, sr) = errors.shape();
    let q = 1.0 / (m - 1.0);
    let mut values = DMatrix::zeros(n, sr + 1);
    for i in 0..n {
        let row: Vec<f64> = errors.row(i).iter().copied().collect();
        let zeros = row.iter().filter(|&&r| r == 0.0).count();
        let mut regular_total = 0.0;
        for s in 0..sr {
            let u = if zeros > 0 {
                if row[s] == 0.0 { 1.0 / zeros as f64 } else { 0.0 }
            } else {
                let mut denom: f64 = row.iter().map(|&r| libm::pow(row[s] / r, q)).sum();
                denom += libm::pow(row[s] / delta_sq, q);
                1.0 / denom
            };
            values[(i, s)] = u;
            regular_total += u;
        }
        values[(i, sr)] = (1.0 - regular_total).max(0.0);
    }
    Ok(MembershipMatrix::from_raw(values, m))
}

/// Per-object contribution `Σ_s u_is^m r²_is`.
pub fn object_losses(errors: &DMatrix<f64>, u: &MembershipMatrix) -> Vec<f64> {
    let m = u.fuzziness();
    (0..errors.nrows())
        .map(|i| {
            let mut row = 0.0;
            for s in 0..errors.ncols() {
                row += libm::pow(u.get(i, s), m) * errors[(i, s)];
            }
            row
        })
        .collect()
}

/// `Σ_i Σ_s u_is^m r²_is`.
pub fn objective_fcpca(errors: &DMatrix<f64>, u: &MembershipMatrix) -> f64 {
    let mut total = 0.0;
    for l in object_losses(errors, u) {
        total += l;
    }
    total
}

/// `Σ_i Σ_s u_is^m (1 − exp(−β r²_is))`.
pub fn objective_exponential(errors: &DMatrix<f64>, u: &MembershipMatrix, beta: f64) -> f64 {
    objective_fcpca(&errors.map(|r| exponential_loss(beta, r)), u)
}

/// Regular-cluster loss plus the noise penalty `δ² Σ_i (1 − Σ_s u_is)^m`.
/// `u` carries the noise column last; `errors` covers regular clusters only.
pub fn objective_noise(errors: &DMatrix<f64>, u: &MembershipMatrix, delta_sq: f64) -> f64 {
    let m = u.fuzziness();
    let sr = errors.ncols();
    let mut total = 0.0;
    for i in 0..errors.nrows() {
        let mut row = 0.0;
        let mut regular = 0.0;
        for s in 0..sr {
            let u_is = u.get(i, s);
            row += libm::pow(u_is, m) * errors[(i, s)];
            regular += u_is;
        }
        row += delta_sq * libm::pow((1.0 - regular).max(0.0), m);
        total += row;
    }
    total
}
