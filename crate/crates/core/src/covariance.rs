//! Lag-indexed second-order summaries of a series and the membership-weighted
//! common subspaces built from them.
//!
//! Conventions shared by every routine here: channel means are computed once
//! over the full series, and every lagged covariance is normalised by `T`
//! (not `T - l`), so the lag-0 diagonal blocks are the same matrix at every lag.

use alloc::vec::Vec;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Number of lags used unless configured otherwise.
pub const DEFAULT_MAX_LAG: usize = 2;

/// Eigenvalues below this fraction of the largest are treated as zero when
/// counting explained variance.
const RANK_TOLERANCE: f64 = 1e-10;

fn check_finite(x: &DMatrix<f64>) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput)
    }
}

pub fn column_means(x: &DMatrix<f64>) -> Vec<f64> {
    let t = x.nrows() as f64;
    x.column_iter().map(|c| c.iter().sum::<f64>() / t).collect()
}

fn cross_covariance_with_means(x: &DMatrix<f64>, lag: usize, means: &[f64]) -> DMatrix<f64> {
    let (t, p) = x.shape();
    let mut out = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in 0..p {
            let mut acc = 0.0;
            for r in 0..t - lag {
                acc += (x[(r, a)] - means[a]) * (x[(r + lag, b)] - means[b]);
            }
            out[(a, b)] = acc / t as f64;
        }
    }
    out
}

/// Sample cross-covariance between the series and its `lag`-shifted copy:
/// entry `(a, b)` is `(1/T) Σ_t (x[t,a] - μ_a)(x[t+lag,b] - μ_b)`.
pub fn lagged_cross_covariance(x: &DMatrix<f64>, lag: usize) -> Result<DMatrix<f64>> {
    if lag >= x.nrows() {
        return Err(Error::LagTooLarge { lag, len: x.nrows() });
    }
    check_finite(x)?;
    Ok(cross_covariance_with_means(x, lag, &column_means(x)))
}

fn assemble_block(g0: &DMatrix<f64>, gl: &DMatrix<f64>) -> DMatrix<f64> {
    let p = g0.nrows();
    let mut out = DMatrix::zeros(2 * p, 2 * p);
    for a in 0..p {
        for b in 0..p {
            out[(a, b)] = g0[(a, b)];
            out[(p + a, p + b)] = g0[(a, b)];
            out[(a, p + b)] = gl[(a, b)];
            out[(p + b, a)] = gl[(a, b)];
        }
    }
    out
}

/// The `2p × 2p` block matrix `[[Γ(0), Γ(l)], [Γ(l)ᵀ, Γ(0)]]`.
pub fn block_covariance(x: &DMatrix<f64>, lag: usize) -> Result<DMatrix<f64>> {
    if lag == 0 {
        return Err(Error::InvalidParameter("block covariance lag must be positive"));
    }
    if lag >= x.nrows() {
        return Err(Error::LagTooLarge { lag, len: x.nrows() });
    }
    check_finite(x)?;
    let means = column_means(x);
    let g0 = cross_covariance_with_means(x, 0, &means);
    let gl = cross_covariance_with_means(x, lag, &means);
    Ok(assemble_block(&g0, &gl))
}

/// Centered `(T - l) × 2p` matrix whose row `t` is `[x_t, x_{t+l}]`.
pub fn lagged_embedding(x: &DMatrix<f64>, lag: usize) -> Result<DMatrix<f64>> {
    if lag >= x.nrows() {
        return Err(Error::LagTooLarge { lag, len: x.nrows() });
    }
    check_finite(x)?;
    Ok(embedding_with_means(x, lag, &column_means(x)))
}

fn embedding_with_means(x: &DMatrix<f64>, lag: usize, means: &[f64]) -> DMatrix<f64> {
    let (t, p) = x.shape();
    DMatrix::from_fn(t - lag, 2 * p, |r, c| {
        if c < p {
            x[(r, c)] - means[c]
        } else {
            x[(r + lag, c - p)] - means[c - p]
        }
    })
}

/// Block covariances of one series for lags `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedBlocks {
    channels: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl LaggedBlocks {
    pub fn from_series(x: &DMatrix<f64>, max_lag: usize) -> Result<Self> {
        if max_lag == 0 {
            return Err(Error::InvalidParameter("max lag must be positive"));
        }
        if max_lag >= x.nrows() {
            return Err(Error::LagTooLarge { lag: max_lag, len: x.nrows() });
        }
        check_finite(x)?;
        let means = column_means(x);
        let g0 = cross_covariance_with_means(x, 0, &means);
        let blocks = (1..=max_lag)
            .map(|l| assemble_block(&g0, &cross_covariance_with_means(x, l, &means)))
            .collect();
        Ok(Self { channels: x.ncols(), blocks })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn max_lag(&self) -> usize {
        self.blocks.len()
    }

    /// Block matrix at `lag` (1-based).
    pub fn at(&self, lag: usize) -> &DMatrix<f64> {
        &self.blocks[lag - 1]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }
}

/// Lagged embeddings of one series for lags `1..=L`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaggedEmbedding {
    lags: Vec<DMatrix<f64>>,
}

impl LaggedEmbedding {
    pub fn from_series(x: &DMatrix<f64>, max_lag: usize) -> Result<Self> {
        if max_lag == 0 {
            return Err(Error::InvalidParameter("max lag must be positive"));
        }
        if max_lag >= x.nrows() {
            return Err(Error::LagTooLarge { lag: max_lag, len: x.nrows() });
        }
        check_finite(x)?;
        let means = column_means(x);
        Ok(Self { lags: (1..=max_lag).map(|l| embedding_with_means(x, l, &means)).collect() })
    }

    pub fn from_matrices(lags: Vec<DMatrix<f64>>) -> Self {
        Self { lags }
    }

    pub fn max_lag(&self) -> usize {
        self.lags.len()
    }

    /// Embedding at `lag` (1-based).
    pub fn at(&self, lag: usize) -> &DMatrix<f64> {
        &self.lags[lag - 1]
    }

    pub fn lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }
}

/// `Σ_i u_i^m B_i / Σ_i u_i^m` over the given blocks.
pub fn weighted_common_covariance(
    blocks: &[&DMatrix<f64>],
    weights: &[f64],
    m: f64,
) -> Result<DMatrix<f64>> {
    if blocks.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: blocks.len(), found: weights.len() });
    }
    let first = blocks.first().ok_or(Error::InvalidShape("no blocks"))?;
    let d = first.nrows();
    let mut acc: DMatrix<f64> = DMatrix::zeros(d, d);
    let mut total = 0.0;
    for (b, &u) in blocks.iter().zip(weights) {
        if b.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, found: b.nrows() });
        }
        let w = libm::pow(u, m);
        if w == 0.0 {
            continue;
        }
        for (a, v) in acc.iter_mut().zip(b.iter()) {
            *a += w * v;
        }
        total += w;
    }
    if total < 1e-12 {
        return Err(Error::DegenerateWeights);
    }
    acc /= total;
    Ok(acc)
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue, with each
/// eigenvector's largest-magnitude entry made positive.
pub fn sorted_eigen(sigma: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if !sigma.is_square() {
        return Err(Error::DimensionMismatch { expected: sigma.nrows(), found: sigma.ncols() });
    }
    check_finite(sigma)?;
    let d = sigma.nrows();
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 100_000).ok_or(Error::EigFailure)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = DMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        for r in 1..d {
            if col[r].abs() > col[pivot].abs() {
                pivot = r;
            }
        }
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    Ok((values, vectors))
}

/// Smallest `k ≥ 1` whose leading eigenvalues explain at least `fraction` of
/// the (clamped non-negative) spectrum. `values` must be sorted descending.
pub fn explained_rank(values: &[f64], fraction: f64) -> usize {
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let floor = RANK_TOLERANCE * top;
    let clamped: Vec<f64> = values.iter().map(|&v| if v > floor { v } else { 0.0 }).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    let target = fraction * total;
    let mut cum = 0.0;
    for (k, v) in clamped.iter().enumerate() {
        cum += v;
        if cum >= target {
            return k + 1;
        }
    }
    values.len()
}

/// Leading eigenvectors of `sigma` explaining a `fraction` of its variance.
pub fn common_axes(sigma: &DMatrix<f64>, fraction: f64) -> Result<DMatrix<f64>> {
    Ok(Subspace::from_covariance(sigma, fraction)?.axes)
}

/// `Σ_l ‖X̂(l) − X̂(l) C(l) C(l)ᵀ‖²_F`, evaluated densely.
pub fn reconstruction_error(emb: &LaggedEmbedding, axes: &[DMatrix<f64>]) -> Result<f64> {
    if emb.max_lag() != axes.len() {
        return Err(Error::DimensionMismatch { expected: emb.max_lag(), found: axes.len() });
    }
    let mut total = 0.0;
    for (x, c) in emb.lags().iter().zip(axes) {
        if c.nrows() != x.ncols() {
            return Err(Error::DimensionMismatch { expected: x.ncols(), found: c.nrows() });
        }
        let residual = x - (x * c) * c.transpose();
        total += residual.norm_squared();
    }
    Ok(total)
}

/// One cluster's subspace at one lag: retained axes plus their orthogonal complement.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    axes: DMatrix<f64>,
    complement: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl Subspace {
    pub fn from_covariance(sigma: &DMatrix<f64>, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter("variance fraction must lie in (0, 1]"));
        }
        let (values, vectors) = sorted_eigen(sigma)?;
        let k = explained_rank(&values, fraction);
        Ok(Self::split(values, vectors, k))
    }

    /// Leading `rank` eigenvectors, clamped to `1..=dim`.
    pub fn with_rank(sigma: &DMatrix<f64>, rank: usize) -> Result<Self> {
        let (values, vectors) = sorted_eigen(sigma)?;
        let k = rank.clamp(1, vectors.ncols());
        Ok(Self::split(values, vectors, k))
    }

    fn split(values: Vec<f64>, vectors: DMatrix<f64>, k: usize) -> Self {
        let d = vectors.nrows();
        Self {
            axes: vectors.columns(0, k).into_owned(),
            complement: vectors.columns(k, d - k).into_owned(),
            eigenvalues: values,
        }
    }

    pub fn axes(&self) -> &DMatrix<f64> {
        &self.axes
    }

    pub fn rank(&self) -> usize {
        self.axes.ncols()
    }

    pub fn dim(&self) -> usize {
        self.axes.nrows()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.axes * self.axes.transpose()
    }

    /// Energy of a Gram matrix `G = X̂ᵀX̂` left outside the subspace, i.e.
    /// `‖X̂ − X̂CCᵀ‖²_F`. Uses whichever of the axes or the complement is smaller.
    pub fn residual_energy(&self, gram: &DMatrix<f64>, gram_trace: f64) -> f64 {
        let r = if self.axes.ncols() <= self.complement.ncols() {
            gram_trace - self.axes.dot(&(gram * &self.axes))
        } else if self.complement.ncols() == 0 {
            0.0
        } else {
            self.complement.dot(&(gram * &self.complement))
        };
        r.max(0.0)
    }
}

/// Axes for every (cluster, lag) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSubspaces {
    /// `subspaces[s][l - 1]`
    subspaces: Vec<Vec<Subspace>>,
    variance_fraction: f64,
}

impl ClusterSubspaces {
    pub fn new(subspaces: Vec<Vec<Subspace>>, variance_fraction: f64) -> Self {
        Self { subspaces, variance_fraction }
    }

    pub fn n_clusters(&self) -> usize {
        self.subspaces.len()
    }

    pub fn max_lag(&self) -> usize {
        self.subspaces.first().map_or(0, |s| s.len())
    }

    pub fn variance_fraction(&self) -> f64 {
        self.variance_fraction
    }

    /// Subspace of `cluster` (0-based) at `lag` (1-based).
    pub fn get(&self, cluster: usize, lag: usize) -> &Subspace {
        &self.subspaces[cluster][lag - 1]
    }

    pub fn axes(&self, cluster: usize, lag: usize) -> &DMatrix<f64> {
        self.get(cluster, lag).axes()
    }

    pub fn projector(&self, cluster: usize, lag: usize) -> DMatrix<f64> {
        self.get(cluster, lag).projector()
    }

    /// Number of axes per `(cluster, lag)`, cluster-major.
    pub fn ranks(&self) -> Vec<usize> {
        self.subspaces.iter().flat_map(|c| c.iter().map(Subspace::rank)).collect()
    }

    pub fn cluster_axes(&self, cluster: usize) -> Vec<DMatrix<f64>> {
        self.subspaces[cluster].iter().map(|s| s.axes().clone()).collect()
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            subspaces: perm.iter().map(|&s| self.subspaces[s].clone()).collect(),
            variance_fraction: self.variance_fraction,
        }
    }
}
