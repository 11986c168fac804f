//! Robust variants: exponential loss, noise cluster and trimming.

use alloc::string::String;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_fcpca, run, run_noise_from, FitOptions, FitResult, Mode, PreparedDataset};
use crate::membership::MembershipMatrix;
use crate::rng::derive_seed;

/// Noise membership at or above this marks an object as an outlier.
pub const NOISE_FLAG_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSchedule {
    /// Computed from the first iteration's errors and frozen.
    Once,
    #[default]
    EveryIteration,
}

/// Where the noise-cluster iterations start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseStart {
    /// Random memberships over the regular clusters and the noise cluster.
    Random,
    /// The converged plain fit with the same options, with zero noise membership.
    #[default]
    Fcpca,
}

/// Noise-cluster settings: `δ² = λ · mean regular-cluster error`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub lambda: f64,
    #[serde(default)]
    pub schedule: NoiseSchedule,
    #[serde(default)]
    pub start: NoiseStart,
}

impl NoiseConfig {
    pub fn new(lambda: f64) -> Self {
        Self { lambda, schedule: NoiseSchedule::EveryIteration, start: NoiseStart::Fcpca }
    }

    pub fn with_schedule(mut self, schedule: NoiseSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_start(mut self, start: NoiseStart) -> Self {
        self.start = start;
        self
    }
}

fn with_noise_column(u: &MembershipMatrix) -> MembershipMatrix {
    let (n, s) = (u.n_objects(), u.n_clusters());
    let mut v = DMatrix::zeros(n, s + 1);
    v.columns_mut(0, s).copy_from(u.values());
    MembershipMatrix::from_raw(v, u.fuzziness())
}

fn noise_warm_start(prep: &PreparedDataset, opts: &FitOptions) -> Result<MembershipMatrix> {
    Ok(with_noise_column(&fit_fcpca(prep, opts)?.memberships))
}

/// Which per-object quantity ranks objects for trimming.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrimLoss {
    /// The object's objective contribution `Σ_s u_is^m r²_is`.
    #[default]
    Weighted,
    /// `min_s r²_is`.
    MinError,
}

/// Result of a trimming step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimConfig {
    pub alpha: f64,
    /// `⌊N(1 − α)⌋`
    pub retained_count: usize,
    /// Retained object indices, ascending.
    pub retained: Vec<usize>,
}

/// `β = [(1/N) Σ_i min_s r²_is]^{-1}`.
pub fn estimate_beta(errors: &DMatrix<f64>) -> Result<f64> {
    let n = errors.nrows();
    if n == 0 || errors.ncols() == 0 {
        return Err(Error::InvalidShape("empty error matrix"));
    }
    let mean = errors.row_iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).sum::<f64>() / n as f64;
    if !(mean >= 1e-300) {
        return Err(Error::DegenerateScale);
    }
    Ok(1.0 / mean)
}

/// `δ² = λ / (N (S − 1)) Σ_i Σ_{s<S} r²_is`, with `errors` covering the
/// regular clusters only.
pub fn update_noise_distance(errors: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive"));
    }
    if errors.is_empty() {
        return Err(Error::InvalidShape("empty error matrix"));
    }
    let total = errors.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateScale);
    }
    Ok(lambda * total / errors.len() as f64)
}

pub(crate) fn retained_count(n: usize, alpha: f64, clusters: usize) -> Result<usize> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter("trimming proportion must lie in [0, 1)"));
    }
    let h = libm::floor(n as f64 * (1.0 - alpha)) as usize;
    if h < clusters {
        return Err(Error::TooFewRetained { retained: h, clusters });
    }
    Ok(h)
}

/// Keeps the `⌊N(1 − α)⌋` objects with the smallest loss; ties go to the lower index.
pub fn select_trim_set(losses: &[f64], alpha: f64, clusters: usize) -> Result<TrimConfig> {
    let h = retained_count(losses.len(), alpha, clusters)?;
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    let mut retained = order[..h].to_vec();
    retained.sort_unstable();
    Ok(TrimConfig { alpha, retained_count: h, retained })
}

/// Exponential-loss variant; `β` is estimated from the first iteration's errors and held fixed.
pub fn fit_rfcpca_e(prep: &PreparedDataset, opts: &FitOptions) -> Result<FitResult> {
    run(prep, opts, Mode::Exponential { beta: None })
}

/// Exponential-loss variant with an externally fixed `β`.
pub fn fit_rfcpca_e_with_beta(prep: &PreparedDataset, opts: &FitOptions, beta: f64) -> Result<FitResult> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter("beta must be positive"));
    }
    run(prep, opts, Mode::Exponential { beta: Some(beta) })
}

/// Noise-cluster variant. `opts.clusters` counts the regular clusters; the
/// fitted membership matrix has one more column for noise.
pub fn fit_rfcpca_n(prep: &PreparedDataset, opts: &FitOptions, noise: &NoiseConfig) -> Result<FitResult> {
    if !(noise.lambda > 0.0) {
        return Err(Error::InvalidParameter("lambda must be positive"));
    }
    match noise.start {
        NoiseStart::Random => run(prep, opts, Mode::Noise { lambda: noise.lambda, schedule: noise.schedule }),
        NoiseStart::Fcpca => {
            let init = noise_warm_start(prep, opts)?;
            run_noise_from(prep, opts, noise.lambda, noise.schedule, init)
        }
    }
}

/// Trimmed variant. With `alpha = 0` it reproduces [`crate::fit::fit_fcpca`] exactly.
pub fn fit_rfcpca_t(prep: &PreparedDataset, opts: &FitOptions, alpha: f64, loss: TrimLoss) -> Result<FitResult> {
    run(prep, opts, Mode::Trimmed { alpha, loss })
}

/// `1, 1/2, 1/4, …` with `halvings + 1` entries.
pub fn default_lambda_grid(halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|k| libm::ldexp(1.0, -(k as i32))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub lambda: f64,
    /// `None` when the fit at this λ failed.
    pub outlier_fraction: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowSelection {
    pub lambda: f64,
    pub curve: Vec<ElbowPoint>,
    /// Set when the curve never rises, in which case `lambda` is the largest grid value.
    pub no_elbow: bool,
    /// Grid positions where the outlier fraction dropped as λ decreased.
    pub monotonicity_violations: Vec<usize>,
}

impl ElbowSelection {
    pub fn fractions(&self) -> Vec<Option<f64>> {
        self.curve.iter().map(|p| p.outlier_fraction).collect()
    }
}

/// Fraction of objects whose noise membership reaches the flag threshold.
pub fn noise_outlier_fraction(fit: &FitResult) -> f64 {
    let u = fit.memberships.values();
    let noise = u.ncols() - 1;
    let flagged = u.column(noise).iter().filter(|&&v| v >= NOISE_FLAG_THRESHOLD).count();
    flagged as f64 / u.nrows() as f64
}

/// Index `j` such that the step from `fractions[j]` to `fractions[j+1]` is the
/// largest increase (first one on ties), or `None` if the curve never rises.
pub fn elbow_index(fractions: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in 0..fractions.len().saturating_sub(1) {
        let jump = fractions[j + 1] - fractions[j];
        if jump > 0.0 && best.is_none_or(|(_, b)| jump > b) {
            best = Some((j, jump));
        }
    }
    best.map(|(j, _)| j)
}

/// Fits the noise variant along a decreasing λ grid and picks the λ just
/// before the largest jump in the flagged fraction. `noise.lambda` is ignored.
/// With a warm start every λ starts from the same plain fit; with a random
/// start each λ gets its own derived seed. Grid points whose fit fails are
/// kept in the curve with their error and skipped when looking for the jump;
/// if every fit fails the first error is returned.
pub fn select_lambda_elbow(
    prep: &PreparedDataset,
    opts: &FitOptions,
    grid: &[f64],
    noise: &NoiseConfig,
) -> Result<ElbowSelection> {
    if grid.len() < 3 {
        return Err(Error::InvalidParameter("lambda grid needs at least three values"));
    }
    if grid.windows(2).any(|w| !(w[1] < w[0])) || grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter("lambda grid must be positive and strictly decreasing"));
    }
    let warm = match noise.start {
        NoiseStart::Fcpca => Some(noise_warm_start(prep, opts)?),
        NoiseStart::Random => None,
    };
    let mut curve = Vec::with_capacity(grid.len());
    let mut first_error = None;
    for (k, &lambda) in grid.iter().enumerate() {
        let fit = match &warm {
            Some(init) => run_noise_from(prep, opts, lambda, noise.schedule, init.clone()),
            None => {
                let o = opts.with_seed(derive_seed(opts.seed, &[k as u64]));
                run(prep, &o, Mode::Noise { lambda, schedule: noise.schedule })
            }
        };
        match fit {
            Ok(fit) => curve.push(ElbowPoint { lambda, outlier_fraction: Some(noise_outlier_fraction(&fit)), error: None }),
            Err(e) => {
                curve.push(ElbowPoint { lambda, outlier_fraction: None, error: Some(e.name().into()) });
                first_error.get_or_insert(e);
            }
        }
    }
    let valid: Vec<(usize, f64)> =
        curve.iter().enumerate().filter_map(|(k, p)| p.outlier_fraction.map(|f| (k, f))).collect();
    if valid.is_empty() {
        return Err(first_error.expect("grid is nonempty"));
    }
    let fractions: Vec<f64> = valid.iter().map(|&(_, f)| f).collect();
    let monotonicity_violations =
        (0..fractions.len() - 1).filter(|&j| fractions[j + 1] < fractions[j]).map(|j| valid[j + 1].0).collect();
    let (lambda, no_elbow) = match elbow_index(&fractions) {
        Some(j) => (grid[valid[j].0], false),
        None => (grid[valid[0].0], true),
    };
    Ok(ElbowSelection { lambda, curve, no_elbow, monotonicity_violations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn beta_examples() {
        let e = DMatrix::from_row_slice(2, 2, &[2.0, 5.0, 9.0, 2.0]);
        assert_eq!(estimate_beta(&e).unwrap(), 0.5);
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 5.0, 3.0, 4.0]);
        assert_eq!(estimate_beta(&e).unwrap(), 0.5);
        let scaled = estimate_beta(&(e.clone() * 4.0)).unwrap();
        assert!((scaled - 0.125).abs() < 1e-15);
        assert_eq!(estimate_beta(&DMatrix::zeros(3, 2)).unwrap_err(), Error::DegenerateScale);
    }

    #[test]
    fn noise_distance_examples() {
        assert!((update_noise_distance(&DMatrix::from_element(5, 3, 1.0), 0.7).unwrap() - 0.7).abs() < 1e-15);
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(update_noise_distance(&e, 1.0).unwrap(), 2.5);
        assert_eq!(update_noise_distance(&e, 2.0).unwrap(), 5.0);
        assert_eq!(update_noise_distance(&DMatrix::zeros(2, 2), 1.0).unwrap_err(), Error::DegenerateScale);
    }

    #[test]
    fn trim_set_examples() {
        assert_eq!(select_trim_set(&[3.0, 1.0, 2.0], 0.0, 1).unwrap().retained, vec![0, 1, 2]);
        let t = select_trim_set(&[5.0, 1.0, 3.0, 2.0], 0.5, 2).unwrap();
        assert_eq!(t.retained_count, 2);
        assert_eq!(t.retained, vec![1, 3]);
        assert_eq!(select_trim_set(&[1.0; 4], 0.25, 2).unwrap().retained, vec![0, 1, 2]);
        assert_eq!(
            select_trim_set(&[1.0; 4], 0.6, 2).unwrap_err(),
            Error::TooFewRetained { retained: 1, clusters: 2 }
        );
        assert!(select_trim_set(&[1.0; 4], 1.0, 1).is_err());
    }

    #[test]
    fn elbow_picks_value_before_largest_jump() {
        // shaped like the published example: flat, small plateau, then a collapse
        let f = [0.0, 0.0, 0.0, 0.2, 0.2, 0.2, 0.25, 0.95, 1.0];
        assert_eq!(elbow_index(&f), Some(6));
        assert_eq!(elbow_index(&[0.1, 0.1, 0.1]), None);
        assert_eq!(elbow_index(&[0.3, 0.2, 0.1]), None);
    }

    #[test]
    fn default_grid_halves() {
        let g = default_lambda_grid(20);
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[20], 1.0 / 1_048_576.0);
    }
}
