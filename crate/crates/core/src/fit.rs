//! The alternating optimiser: memberships → weighted common covariances →
//! axes → reconstruction errors → memberships, until the objective settles.
//!
//! All four variants share this loop; they differ only in the membership
//! rule, the objective and which objects feed the subspace update.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{weighted_common_covariance, ClusterSubspaces, LaggedBlocks, Subspace};
use crate::dataset::MtsDataset;
use crate::error::{Error, Result};
use crate::membership::{
    self, init_memberships, object_losses, objective_exponential, objective_fcpca, objective_noise,
    update_memberships_exponential, update_memberships_fcpca, update_memberships_noise, MembershipMatrix,
};
use crate::robust::{estimate_beta, select_trim_set, update_noise_distance, NoiseSchedule, TrimLoss};

/// Consecutive non-improving iterations tolerated by the exponential variant.
const EXPONENTIAL_PATIENCE: usize = 5;

/// Relative slack below which a rise of the objective counts as round-off.
const ASCENT_SLACK: f64 = 1e-10;

/// Per-series quantities reused by every iteration: block covariances for the
/// subspace step, and Gram matrices `X̂(l)ᵀX̂(l)` for the error step.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    channels: usize,
    max_lag: usize,
    blocks: Vec<LaggedBlocks>,
    grams: Vec<Vec<DMatrix<f64>>>,
    gram_traces: Vec<Vec<f64>>,
}

/// Scale of the reconstruction errors `r²_is`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorScale {
    /// Plain squared Frobenius norm of the residual.
    Raw,
    /// Residual divided by the series length, the normaliser of the lagged
    /// covariances. Series of different lengths then weigh equally, and the
    /// subspace step minimises the same quantity the memberships see.
    #[default]
    PerSample,
}

impl PreparedDataset {
    pub fn new(dataset: &MtsDataset, max_lag: usize) -> Result<Self> {
        Self::with_scale(dataset, max_lag, ErrorScale::default())
    }

    pub fn with_scale(dataset: &MtsDataset, max_lag: usize, scale: ErrorScale) -> Result<Self> {
        let mut blocks = Vec::with_capacity(dataset.len());
        let mut grams = Vec::with_capacity(dataset.len());
        let mut gram_traces = Vec::with_capacity(dataset.len());
        for x in dataset.series() {
            blocks.push(LaggedBlocks::from_series(x, max_lag)?);
            let emb = crate::covariance::LaggedEmbedding::from_series(x, max_lag)?;
            let w = match scale {
                ErrorScale::Raw => 1.0,
                ErrorScale::PerSample => 1.0 / x.nrows() as f64,
            };
            let g: Vec<DMatrix<f64>> = emb.lags().iter().map(|e| e.tr_mul(e) * w).collect();
            gram_traces.push(g.iter().map(|m| m.trace()).collect());
            grams.push(g);
        }
        Ok(Self { channels: dataset.channels(), max_lag, blocks, grams, gram_traces })
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    pub fn blocks(&self, i: usize) -> &LaggedBlocks {
        &self.blocks[i]
    }

    /// `X̂_i(l)ᵀ X̂_i(l)` for `lag` in `1..=L`.
    pub fn gram(&self, i: usize, lag: usize) -> &DMatrix<f64> {
        &self.grams[i][lag - 1]
    }

    /// `Σ_l ‖X̂_i(l)‖²_F`.
    pub fn energy(&self, i: usize) -> f64 {
        self.gram_traces[i].iter().sum()
    }
}

/// Settings common to every variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Substantive clusters. The noise variant adds one more on top.
    pub clusters: usize,
    pub fuzziness: f64,
    pub variance_fraction: f64,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    #[serde(default)]
    pub ranks: RankPolicy,
    /// Object weights in the exponential variant's subspace step.
    #[serde(default)]
    pub exponential_weights: ExponentialWeights,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentialWeights {
    /// `u^m`, as in the plain fit.
    Membership,
    /// `u^m e^{-β r²}` from the previous iteration's errors, the weights under
    /// which the weighted covariance step decreases the exponential objective.
    #[default]
    Loss,
}

/// When the variance rule stops choosing the number of axes per `(cluster, lag)`.
///
/// A rank change can raise the objective, and the loop may then cycle between
/// two rank patterns forever. Holding the ranks fixed makes every later
/// iteration a descent step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy", content = "iterations")]
pub enum RankPolicy {
    /// Re-apply the variance rule on every iteration.
    Free,
    /// On the first rise of the objective, hold the ranks from then on. The
    /// plain and trimmed fits also discard the rising step and resume from
    /// the last accepted state, and stop at the next rise, so their traces
    /// never increase.
    #[default]
    FreezeOnAscent,
    /// Keep the ranks reached after this many iterations.
    FreezeAfter(usize),
}

impl FitOptions {
    pub fn new(clusters: usize, fuzziness: f64) -> Self {
        Self {
            clusters,
            fuzziness,
            variance_fraction: 0.95,
            seed: 0,
            max_iter: 1000,
            tol: 1e-3,
            ranks: RankPolicy::default(),
            exponential_weights: ExponentialWeights::default(),
        }
    }

    pub fn with_exponential_weights(mut self, w: ExponentialWeights) -> Self {
        self.exponential_weights = w;
        self
    }

    pub fn with_ranks(mut self, ranks: RankPolicy) -> Self {
        self.ranks = ranks;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_variance_fraction(mut self, v: f64) -> Self {
        self.variance_fraction = v;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    fn validate(&self) -> Result<()> {
        membership::check_fuzziness(self.fuzziness)?;
        if self.clusters == 0 {
            return Err(Error::InvalidShape("at least one cluster is required"));
        }
        if !(self.variance_fraction > 0.0 && self.variance_fraction <= 1.0) {
            return Err(Error::InvalidParameter("variance fraction must lie in (0, 1]"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParameter("max_iter must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidParameter("tol must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Fcpca,
    Exponential,
    Noise,
    Trimmed,
}

impl VariantKind {
    pub const ALL: [VariantKind; 4] =
        [VariantKind::Fcpca, VariantKind::Exponential, VariantKind::Noise, VariantKind::Trimmed];

    pub fn label(self) -> &'static str {
        match self {
            VariantKind::Fcpca => "FCPCA",
            VariantKind::Exponential => "RFCPCA-E",
            VariantKind::Noise => "RFCPCA-N",
            VariantKind::Trimmed => "RFCPCA-T",
        }
    }
}

/// Variant-specific quantities of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum VariantParams {
    Fcpca,
    Exponential { beta: f64 },
    Noise { lambda: f64, delta_sq: f64, schedule: NoiseSchedule },
    Trimmed { alpha: f64, retained: Vec<usize>, loss: TrimLoss },
}

impl VariantParams {
    pub fn kind(&self) -> VariantKind {
        match self {
            VariantParams::Fcpca => VariantKind::Fcpca,
            VariantParams::Exponential { .. } => VariantKind::Exponential,
            VariantParams::Noise { .. } => VariantKind::Noise,
            VariantParams::Trimmed { .. } => VariantKind::Trimmed,
        }
    }
}

/// A converged (or iteration-capped) model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// `N × S`; the noise variant carries the noise cluster as the last column.
    pub memberships: MembershipMatrix,
    /// Subspaces of the substantive clusters.
    pub subspaces: ClusterSubspaces,
    /// `N × S` squared reconstruction errors against the substantive clusters.
    pub errors: DMatrix<f64>,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub params: VariantParams,
    pub options: FitOptions,
}

impl FitResult {
    pub fn variant(&self) -> VariantKind {
        self.params.kind()
    }

    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }

    pub fn n_objects(&self) -> usize {
        self.errors.nrows()
    }

    /// Number of clusters that own a subspace.
    pub fn n_substantive(&self) -> usize {
        self.errors.ncols()
    }
}

/// Weighted common covariance and axes per (cluster, lag). Only the first
/// `clusters` membership columns are used; `rows` restricts the objects.
pub fn update_subspaces(
    prep: &PreparedDataset,
    u: &MembershipMatrix,
    clusters: usize,
    variance_fraction: f64,
    rows: Option<&[usize]>,
) -> Result<ClusterSubspaces> {
    update_subspaces_ranked(prep, u, clusters, variance_fraction, rows, None, None)
}

/// As [`update_subspaces`], but with `ranks` taken from a previous fit instead
/// of the variance rule.
fn update_subspaces_ranked(
    prep: &PreparedDataset,
    u: &MembershipMatrix,
    clusters: usize,
    variance_fraction: f64,
    rows: Option<&[usize]>,
    ranks: Option<&ClusterSubspaces>,
    damping: Option<(&DMatrix<f64>, f64)>,
) -> Result<ClusterSubspaces> {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..prep.len()).collect();
            &all
        }
    };
    let m = u.fuzziness();
    let mut out = Vec::with_capacity(clusters);
    for s in 0..clusters {
        // `w^m = u^m e^{-β r²}` when damped.
        let weights: Vec<f64> = rows
            .iter()
            .map(|&i| match damping {
                Some((errors, beta)) => u.get(i, s) * libm::exp(-beta * errors[(i, s)] / m),
                None => u.get(i, s),
            })
            .collect();
        let mut per_lag = Vec::with_capacity(prep.max_lag());
        for lag in 1..=prep.max_lag() {
            let blocks: Vec<&DMatrix<f64>> = rows.iter().map(|&i| prep.blocks(i).at(lag)).collect();
            let sigma = weighted_common_covariance(&blocks, &weights, m).map_err(|e| match e {
                Error::DegenerateWeights => Error::EmptyCluster { cluster: s },
                other => other,
            })?;
            per_lag.push(match ranks {
                Some(r) => Subspace::with_rank(&sigma, r.get(s, lag).rank())?,
                None => Subspace::from_covariance(&sigma, variance_fraction)?,
            });
        }
        out.push(per_lag);
    }
    Ok(ClusterSubspaces::new(out, variance_fraction))
}

/// `r²_is` for every object and cluster, via the Gram matrices.
pub fn compute_errors(prep: &PreparedDataset, subspaces: &ClusterSubspaces) -> DMatrix<f64> {
    let n = prep.len();
    let s = subspaces.n_clusters();
    DMatrix::from_fn(n, s, |i, c| {
        let mut r2 = 0.0;
        for lag in 1..=prep.max_lag() {
            r2 += subspaces.get(c, lag).residual_energy(prep.gram(i, lag), prep.gram_traces[i][lag - 1]);
        }
        r2
    })
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Mode {
    Fcpca,
    Exponential { beta: Option<f64> },
    Noise { lambda: f64, schedule: NoiseSchedule },
    Trimmed { alpha: f64, loss: TrimLoss },
}

pub(crate) fn run(prep: &PreparedDataset, opts: &FitOptions, mode: Mode) -> Result<FitResult> {
    opts.validate()?;
    let n = prep.len();
    let s = opts.clusters;
    let m = opts.fuzziness;
    let total = match mode {
        Mode::Noise { .. } => s + 1,
        _ => s,
    };
    if total > n {
        return Err(Error::InvalidShape("more clusters than objects"));
    }
    if let Mode::Trimmed { alpha, .. } = mode {
        crate::robust::retained_count(n, alpha, s)?;
    }

    let u = init_memberships(n, total, m, opts.seed)?;
    iterate(prep, opts, mode, u)
}

fn iterate(prep: &PreparedDataset, opts: &FitOptions, mode: Mode, mut u: MembershipMatrix) -> Result<FitResult> {
    let s = opts.clusters;
    let m = opts.fuzziness;
    let descent = matches!(mode, Mode::Fcpca | Mode::Trimmed { .. });
    let mut retained: Option<Vec<usize>> = None;
    let mut beta = match mode {
        Mode::Exponential { beta } => beta,
        _ => None,
    };
    let mut delta_sq: Option<f64> = None;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    let mut iterations = 0;
    let mut frozen: Option<ClusterSubspaces> = None;
    // Last accepted state, for the descent variants' ascent guard.
    let mut accepted: Option<(MembershipMatrix, ClusterSubspaces, DMatrix<f64>, Option<Vec<usize>>)> = None;
    let mut last_errors: Option<DMatrix<f64>> = None;

    let (subspaces, errors) = loop {
        iterations += 1;
        let damping = match (mode, opts.exponential_weights, beta, last_errors.as_ref()) {
            (Mode::Exponential { .. }, ExponentialWeights::Loss, Some(b), Some(e)) => Some((e, b)),
            _ => None,
        };
        let subspaces = update_subspaces_ranked(
            prep,
            &u,
            s,
            opts.variance_fraction,
            retained.as_deref(),
            frozen.as_ref(),
            damping,
        )?;
        if frozen.is_none() && matches!(opts.ranks, RankPolicy::FreezeAfter(w) if iterations >= w) {
            frozen = Some(subspaces.clone());
        }
        let errors = compute_errors(prep, &subspaces);
        if errors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        let j = match mode {
            Mode::Fcpca => {
                u = update_memberships_fcpca(&errors, m)?;
                objective_fcpca(&errors, &u)
            }
            Mode::Exponential { .. } => {
                let b = match beta {
                    Some(b) => b,
                    None => *beta.insert(estimate_beta(&errors)?),
                };
                u = update_memberships_exponential(&errors, m, b)?;
                objective_exponential(&errors, &u, b)
            }
            Mode::Noise { lambda, schedule } => {
                let d = match (delta_sq, schedule) {
                    (Some(d), NoiseSchedule::Once) => d,
                    _ => update_noise_distance(&errors, lambda)?,
                };
                delta_sq = Some(d);
                u = update_memberships_noise(&errors, m, d)?;
                objective_noise(&errors, &u, d)
            }
            Mode::Trimmed { alpha, loss } => {
                u = update_memberships_fcpca(&errors, m)?;
                let contributions = object_losses(&errors, &u);
                let ranking = match loss {
                    TrimLoss::Weighted => contributions.clone(),
                    TrimLoss::MinError => {
                        errors.row_iter().map(|r| r.iter().copied().fold(f64::INFINITY, f64::min)).collect()
                    }
                };
                let keep = select_trim_set(&ranking, alpha, s)?.retained;
                let mut j = 0.0;
                for &i in &keep {
                    j += contributions[i];
                }
                retained = Some(keep);
                j
            }
        };
        last_errors = Some(errors.clone());
        let prev = trace.last().copied();
        let ascent = prev.is_some_and(|p| j > p + ASCENT_SLACK * (1.0 + p.abs()));

        if ascent && opts.ranks == RankPolicy::FreezeOnAscent {
            if descent {
                // Discard the step and resume from the last accepted state with
                // its ranks held; a second rise ends the fit there.
                let (au, asub, aerr, aret) = accepted.clone().expect("an earlier step was accepted");
                u = au;
                retained = aret;
                if frozen.is_some() {
                    converged = true;
                    break (asub, aerr);
                }
                frozen = Some(asub);
                last_errors = Some(aerr);
                if iterations >= opts.max_iter {
                    let (_, asub, aerr, _) = accepted.expect("an earlier step was accepted");
                    break (asub, aerr);
                }
                continue;
            }
            if frozen.is_none() {
                frozen = Some(subspaces.clone());
            }
        }

        trace.push(j);
        if descent {
            accepted = Some((u.clone(), subspaces.clone(), errors.clone(), retained.clone()));
        }
        if let Some(prev) = prev {
            if (j - prev).abs() < opts.tol {
                converged = true;
                break (subspaces, errors);
            }
        }
        if let Mode::Exponential { .. } = mode {
            if j < best {
                best = j;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= EXPONENTIAL_PATIENCE {
                    converged = true;
                    break (subspaces, errors);
                }
            }
        }
        if iterations >= opts.max_iter {
            break (subspaces, errors);
        }
    };
    let n = prep.len();

    let params = match mode {
        Mode::Fcpca => VariantParams::Fcpca,
        Mode::Exponential { .. } => VariantParams::Exponential { beta: beta.expect("set on first iteration") },
        Mode::Noise { lambda, schedule } => {
            VariantParams::Noise { lambda, delta_sq: delta_sq.expect("set on first iteration"), schedule }
        }
        Mode::Trimmed { alpha, loss } => {
            VariantParams::Trimmed { alpha, retained: retained.unwrap_or_else(|| (0..n).collect()), loss }
        }
    };
    Ok(FitResult {
        memberships: u,
        subspaces,
        errors,
        objective_trace: trace,
        iterations,
        converged,
        params,
        options: *opts,
    })
}

/// Plain fuzzy CPCA with the squared reconstruction loss.
pub fn fit_fcpca(prep: &PreparedDataset, opts: &FitOptions) -> Result<FitResult> {
    run(prep, opts, Mode::Fcpca)
}

/// Fits starting from a supplied membership matrix instead of a random one
/// (squared loss). Used to check permutation equivariance.
pub fn fit_fcpca_from(prep: &PreparedDataset, opts: &FitOptions, init: MembershipMatrix) -> Result<FitResult> {
    opts.validate()?;
    if init.n_objects() != prep.len() || init.n_clusters() != opts.clusters {
        return Err(Error::InvalidShape("initial memberships do not match the problem"));
    }
    let init = MembershipMatrix::from_raw(init.values().clone(), opts.fuzziness);
    iterate(prep, opts, Mode::Fcpca, init)
}

/// Noise-cluster iterations from given memberships (noise column last).
pub(crate) fn run_noise_from(
    prep: &PreparedDataset,
    opts: &FitOptions,
    lambda: f64,
    schedule: NoiseSchedule,
    init: MembershipMatrix,
) -> Result<FitResult> {
    opts.validate()?;
    if init.n_objects() != prep.len() || init.n_clusters() != opts.clusters + 1 {
        return Err(Error::InvalidShape("initial memberships do not match the problem"));
    }
    let init = MembershipMatrix::from_raw(init.values().clone(), opts.fuzziness);
    iterate(prep, opts, Mode::Noise { lambda, schedule }, init)
}
