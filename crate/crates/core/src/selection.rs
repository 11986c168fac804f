//! Validity index and grid search over `(S, m)` or `(S, m, α)`.
//!
//! The index is a Xie–Beni style ratio: the fitted variant's own objective
//! divided by `N` times the smallest squared Frobenius distance between two
//! cluster prototypes `P_s(l) = C_s(l) C_s(l)ᵀ`, summed over lags. Lower is
//! better. The noise cluster has no prototype, so the noise variant's
//! separation runs over its regular clusters; the trimmed variant uses its
//! trimmed objective but keeps the full `N` in the denominator.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::covariance::ClusterSubspaces;
use crate::error::{Error, Result};
use crate::fit::{fit_fcpca, ExponentialWeights, FitOptions, RankPolicy, FitResult, PreparedDataset, VariantKind, VariantParams};
use crate::membership::{object_losses, objective_exponential, objective_fcpca, objective_noise};
use crate::rng::derive_seed;
use crate::robust::{fit_rfcpca_e, fit_rfcpca_n, fit_rfcpca_t, NoiseConfig, TrimLoss};

/// Fuzziness values searched by default.
pub const DEFAULT_FUZZINESS_GRID: [f64; 8] = [1.1, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.5];

/// Trimming proportions searched by default.
pub const DEFAULT_ALPHA_GRID: [f64; 9] = [0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50];

const MIN_SEPARATION: f64 = 1e-12;

/// `min_{s≠s'} Σ_l ‖P_s(l) − P_s'(l)‖²_F`.
pub fn prototype_separation(subspaces: &ClusterSubspaces) -> Result<f64> {
    let s = subspaces.n_clusters();
    if s < 2 {
        return Err(Error::SingleCluster);
    }
    let mut best = f64::INFINITY;
    for a in 0..s {
        for b in a + 1..s {
            let mut d = 0.0;
            for lag in 1..=subspaces.max_lag() {
                let ca = subspaces.axes(a, lag);
                let cb = subspaces.axes(b, lag);
                let overlap = (ca.transpose() * cb).norm_squared();
                d += (ca.ncols() as f64 + cb.ncols() as f64 - 2.0 * overlap).max(0.0);
            }
            best = best.min(d);
        }
    }
    Ok(best)
}

/// The fitted variant's own objective at the final state.
pub fn variant_objective(fit: &FitResult) -> f64 {
    match &fit.params {
        VariantParams::Fcpca => objective_fcpca(&fit.errors, &fit.memberships),
        VariantParams::Exponential { beta } => objective_exponential(&fit.errors, &fit.memberships, *beta),
        VariantParams::Noise { delta_sq, .. } => objective_noise(&fit.errors, &fit.memberships, *delta_sq),
        VariantParams::Trimmed { retained, .. } => {
            let losses = object_losses(&fit.errors, &fit.memberships);
            let mut total = 0.0;
            for &i in retained {
                total += losses[i];
            }
            total
        }
    }
}

pub fn cvi(fit: &FitResult) -> Result<f64> {
    let d_min = prototype_separation(&fit.subspaces)?;
    if d_min < MIN_SEPARATION {
        return Err(Error::DegenerateSeparation);
    }
    Ok(variant_objective(fit) / (fit.n_objects() as f64 * d_min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub variant: VariantKind,
    pub cluster_values: Vec<usize>,
    pub fuzziness_values: Vec<f64>,
    /// Used by the trimmed variant only.
    pub alpha_values: Vec<f64>,
    /// Required by the noise variant.
    pub noise: Option<NoiseConfig>,
    pub trim_loss: TrimLoss,
    pub variance_fraction: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub ranks: RankPolicy,
    pub exponential_weights: ExponentialWeights,
}

impl SearchGrid {
    pub fn new(variant: VariantKind) -> Self {
        Self {
            variant,
            cluster_values: (2..=6).collect(),
            fuzziness_values: DEFAULT_FUZZINESS_GRID.to_vec(),
            alpha_values: DEFAULT_ALPHA_GRID.to_vec(),
            noise: None,
            trim_loss: TrimLoss::Weighted,
            variance_fraction: 0.95,
            max_iter: 1000,
            tol: 1e-3,
            ranks: RankPolicy::default(),
            exponential_weights: ExponentialWeights::default(),
        }
    }

    pub fn with_clusters(mut self, values: Vec<usize>) -> Self {
        self.cluster_values = values;
        self
    }

    pub fn with_fuzziness(mut self, values: Vec<f64>) -> Self {
        self.fuzziness_values = values;
        self
    }

    pub fn with_alphas(mut self, values: Vec<f64>) -> Self {
        self.alpha_values = values;
        self
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = Some(noise);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.cluster_values.is_empty() || self.fuzziness_values.is_empty() {
            return Err(Error::InvalidParameter("search grid lists must be non-empty"));
        }
        if self.fuzziness_values.iter().any(|&m| !(m > 1.0)) {
            return Err(Error::InvalidParameter("fuzziness values must exceed 1"));
        }
        match self.variant {
            VariantKind::Trimmed => {
                if self.alpha_values.is_empty() || self.alpha_values.iter().any(|a| !(0.0..1.0).contains(a)) {
                    return Err(Error::InvalidParameter("alpha values must be non-empty and lie in [0, 1)"));
                }
            }
            VariantKind::Noise if self.noise.is_none() => {
                return Err(Error::InvalidParameter("noise variant needs a noise configuration"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Candidate tuples in grid order: clusters outermost, then fuzziness, then α.
    pub fn candidates(&self) -> Vec<Candidate> {
        let alphas: Vec<Option<f64>> = match self.variant {
            VariantKind::Trimmed => self.alpha_values.iter().map(|&a| Some(a)).collect(),
            _ => vec![None],
        };
        let mut out = Vec::new();
        for &clusters in &self.cluster_values {
            for &fuzziness in &self.fuzziness_values {
                for &alpha in &alphas {
                    out.push(Candidate { clusters, fuzziness, alpha });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub clusters: usize,
    pub fuzziness: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub candidate: Candidate,
    pub seed: Option<u64>,
    pub objective: Option<f64>,
    pub cvi: Option<f64>,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub variant: VariantKind,
    pub restarts: usize,
    pub lambda: Option<f64>,
    pub records: Vec<CandidateRecord>,
    /// Index into `records` of the candidate with the smallest validity index.
    pub winner: usize,
}

impl SelectionReport {
    pub fn winner(&self) -> &CandidateRecord {
        &self.records[self.winner]
    }
}

/// Runs one fit of the grid's variant for a candidate.
pub fn fit_candidate(prep: &PreparedDataset, grid: &SearchGrid, c: &Candidate, seed: u64) -> Result<FitResult> {
    let opts = FitOptions {
        clusters: c.clusters,
        fuzziness: c.fuzziness,
        variance_fraction: grid.variance_fraction,
        seed,
        max_iter: grid.max_iter,
        tol: grid.tol,
        ranks: grid.ranks,
        exponential_weights: grid.exponential_weights,
    };
    match grid.variant {
        VariantKind::Fcpca => fit_fcpca(prep, &opts),
        VariantKind::Exponential => fit_rfcpca_e(prep, &opts),
        VariantKind::Noise => {
            fit_rfcpca_n(prep, &opts, grid.noise.as_ref().ok_or(Error::InvalidParameter("missing noise config"))?)
        }
        VariantKind::Trimmed => fit_rfcpca_t(prep, &opts, c.alpha.unwrap_or(0.0), grid.trim_loss),
    }
}

/// Best-of-`restarts` fit per candidate, then the candidate with the smallest
/// validity index among those that converged without error.
pub fn grid_search(
    prep: &PreparedDataset,
    grid: &SearchGrid,
    seed: u64,
    restarts: usize,
) -> Result<(FitResult, SelectionReport)> {
    grid.validate()?;
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be positive"));
    }
    let mut records = Vec::new();
    let mut winner: Option<(usize, f64, FitResult)> = None;
    for (t, c) in grid.candidates().iter().enumerate() {
        let mut best: Option<(u64, FitResult)> = None;
        let mut last_err = None;
        for r in 0..restarts {
            let s = derive_seed(seed, &[t as u64, r as u64]);
            match fit_candidate(prep, grid, c, s) {
                Ok(fit) => {
                    if best.as_ref().is_none_or(|(_, b)| fit.objective() < b.objective()) {
                        best = Some((s, fit));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        let Some((s, fit)) = best else {
            let err = last_err.expect("at least one restart ran");
            records.push(CandidateRecord {
                candidate: *c,
                seed: None,
                objective: None,
                cvi: None,
                converged: false,
                iterations: None,
                error: Some(err.name().to_string()),
            });
            continue;
        };
        let index = cvi(&fit);
        records.push(CandidateRecord {
            candidate: *c,
            seed: Some(s),
            objective: Some(fit.objective()),
            cvi: index.as_ref().ok().copied(),
            converged: fit.converged,
            iterations: Some(fit.iterations),
            error: index.as_ref().err().map(|e| e.name().to_string()),
        });
        if let (Ok(v), true) = (index, fit.converged) {
            if winner.as_ref().is_none_or(|(_, w, _)| v < *w) {
                winner = Some((records.len() - 1, v, fit));
            }
        }
    }
    let (w, _, fit) = winner.ok_or(Error::AllCandidatesFailed)?;
    let report = SelectionReport {
        variant: grid.variant,
        restarts,
        lambda: grid.noise.map(|n| n.lambda),
        records,
        winner: w,
    };
    Ok((fit, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::Subspace;
    use nalgebra::DMatrix;

    fn line(d: usize, j: usize) -> Subspace {
        let mut sigma = DMatrix::zeros(d, d);
        sigma[(j, j)] = 1.0;
        Subspace::from_covariance(&sigma, 0.9).unwrap()
    }

    #[test]
    fn separation_examples() {
        let same = ClusterSubspaces::new(vec![vec![line(3, 0)], vec![line(3, 0)]], 0.9);
        assert!(prototype_separation(&same).unwrap() < 1e-15);
        let orth = ClusterSubspaces::new(vec![vec![line(3, 0)], vec![line(3, 1)]], 0.9);
        assert!((prototype_separation(&orth).unwrap() - 2.0).abs() < 1e-15);
        let one = ClusterSubspaces::new(vec![vec![line(3, 0)]], 0.9);
        assert_eq!(prototype_separation(&one).unwrap_err(), Error::SingleCluster);
    }

    #[test]
    fn candidate_order() {
        let g = SearchGrid::new(VariantKind::Trimmed)
            .with_clusters(vec![2, 3])
            .with_fuzziness(vec![1.5, 2.0])
            .with_alphas(vec![0.1, 0.2]);
        let c = g.candidates();
        assert_eq!(c.len(), 8);
        assert_eq!(c[1], Candidate { clusters: 2, fuzziness: 1.5, alpha: Some(0.2) });
        assert_eq!(c[4].clusters, 3);
        assert_eq!(SearchGrid::new(VariantKind::Fcpca).candidates().len(), 40);
    }

    #[test]
    fn noise_grid_requires_config() {
        let g = SearchGrid::new(VariantKind::Noise);
        assert!(g.validate().is_err());
        assert!(g.with_noise(NoiseConfig::new(0.1)).validate().is_ok());
    }
}
