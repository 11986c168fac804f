//! Reference implementations written directly from the defining formulas,
//! compared against the library on small random instances.
//!
//! Every reference here avoids the library's own numerical routes: block
//! covariances are summed from outer products, eigenvectors come from a cyclic
//! Jacobi solver, reconstruction errors are computed on the dense embedding,
//! and pair-counting indices enumerate all `n(n-1)/2` pairs.

use nalgebra::DMatrix;
use rand::Rng;
use rfcpca_core::covariance::{block_covariance, weighted_common_covariance};
use rfcpca_core::evaluation::{adjusted_rand_index, rand_index};
use rfcpca_core::fit::{compute_errors, update_subspaces, ErrorScale, FitOptions, FitResult, PreparedDataset, VariantParams};
use rfcpca_core::membership::{
    update_memberships_exponential, update_memberships_fcpca, update_memberships_noise,
};
use rfcpca_core::robust::{estimate_beta, update_noise_distance};
use rfcpca_core::selection::{cvi, prototype_separation};
use rfcpca_core::{rng, MembershipMatrix, MtsDataset};

pub const INSTANCES: u64 = 20;
pub const REL_TOL: f64 = 1e-8;
const CLUSTERS: usize = 2;

pub struct Instance {
    pub seed: u64,
    pub series: Vec<DMatrix<f64>>,
    pub max_lag: usize,
    pub fuzziness: f64,
    pub variance_fraction: f64,
    pub memberships: DMatrix<f64>,
}

/// `N ∈ [3, 6]`, `p ∈ [1, 3]`, `T ∈ [20, 50]` per series, `L ∈ {1, 2}`. Each
/// series is a persistent AR(1) factor spread over the channels plus white
/// noise, so the variance rule keeps fewer than `2p` axes and the
/// reconstruction errors stay away from zero. Odd-numbered series oscillate
/// (negative AR coefficient) with alternating loadings, and memberships lean
/// towards the matching cluster, so the two cluster subspaces differ.
pub fn instance(seed: u64) -> Instance {
    let mut r = rng::seeded(seed);
    let n = r.random_range(3..=6);
    let p = r.random_range(1..=3);
    let max_lag = r.random_range(1..=2);
    let series = (0..n)
        .map(|i| {
            let t = r.random_range(20..=50);
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            let phi: f64 = sign * r.random_range(0.9..0.97);
            let loading: Vec<f64> =
                (0..p).map(|j| r.random_range(0.5..1.5) * if j % 2 == 1 { sign } else { 1.0 }).collect();
            let mut z = r.random_range(-1.0..1.0);
            let mut x = DMatrix::zeros(t, p);
            for i in 0..t {
                z = phi * z + r.random_range(-1.0..1.0);
                for j in 0..p {
                    x[(i, j)] = loading[j] * z + 0.2 * r.random_range(-1.0..1.0);
                }
            }
            x
        })
        .collect();
    let mut memberships = DMatrix::zeros(n, CLUSTERS);
    for i in 0..n {
        let lean = r.random_range(0.85..0.98);
        memberships[(i, i % 2)] = lean;
        memberships[(i, 1 - i % 2)] = 1.0 - lean;
    }
    Instance {
        seed,
        series,
        max_lag,
        fuzziness: r.random_range(1.3..3.0),
        variance_fraction: r.random_range(0.55..0.75),
        memberships,
    }
}

fn rel(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(f64::MIN_POSITIVE)
}

fn rel_mat(got: &DMatrix<f64>, want: &DMatrix<f64>, scale: f64) -> f64 {
    if got.shape() != want.shape() {
        return f64::INFINITY;
    }
    (got - want).norm() / want.norm().max(scale).max(f64::MIN_POSITIVE)
}

struct Checker {
    seed: u64,
    checks: usize,
}

impl Checker {
    fn scalar(&mut self, what: &str, got: f64, want: f64) -> Result<(), String> {
        self.checks += 1;
        let e = rel(got, want);
        if e <= REL_TOL {
            Ok(())
        } else {
            Err(format!("instance {}: {what}: got {got:e}, reference {want:e} (relative error {e:e})", self.seed))
        }
    }

    fn matrix(&mut self, what: &str, got: &DMatrix<f64>, want: &DMatrix<f64>) -> Result<(), String> {
        self.matrix_scaled(what, got, want, 0.0)
    }

    /// Relative to `max(‖want‖, scale)`. Reconstruction errors vanish when the
    /// variance rule keeps every axis, so they are measured against the energy
    /// of the embeddings instead.
    fn matrix_scaled(&mut self, what: &str, got: &DMatrix<f64>, want: &DMatrix<f64>, scale: f64) -> Result<(), String> {
        self.checks += 1;
        let e = rel_mat(got, want, scale);
        if e <= REL_TOL {
            Ok(())
        } else {
            Err(format!("instance {}: {what}: relative error {e:e}", self.seed))
        }
    }
}

fn mean_centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, p) = x.shape();
    let mut c = x.clone();
    for j in 0..p {
        let mut mu = 0.0;
        for i in 0..t {
            mu += x[(i, j)];
        }
        mu /= t as f64;
        for i in 0..t {
            c[(i, j)] -= mu;
        }
    }
    c
}

/// `Γ̂(l) = [[Γ(0), Γ(l)], [Γ(l)ᵀ, Γ(0)]]` with `Γ(h) = (1/T) Σ_t x̃_t x̃_{t+h}ᵀ`,
/// accumulated one outer product at a time.
pub fn reference_block(x: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (t, p) = x.shape();
    let c = mean_centered(x);
    let gamma = |h: usize| {
        let mut g = DMatrix::zeros(p, p);
        for i in 0..t - h {
            let a = c.row(i).transpose();
            let b = c.row(i + h);
            g += &a * &b;
        }
        g / t as f64
    };
    let g0 = gamma(0);
    let gl = gamma(lag);
    let mut out = DMatrix::zeros(2 * p, 2 * p);
    out.view_mut((0, 0), (p, p)).copy_from(&g0);
    out.view_mut((p, p), (p, p)).copy_from(&g0);
    out.view_mut((0, p), (p, p)).copy_from(&gl);
    out.view_mut((p, 0), (p, p)).copy_from(&gl.transpose());
    out
}

/// Rows `[x̃_t, x̃_{t+l}]` for `t = 0..T-l`.
pub fn reference_embedding(x: &DMatrix<f64>, lag: usize) -> DMatrix<f64> {
    let (t, p) = x.shape();
    let c = mean_centered(x);
    let mut e = DMatrix::zeros(t - lag, 2 * p);
    for i in 0..t - lag {
        for j in 0..p {
            e[(i, j)] = c[(i, j)];
            e[(i, p + j)] = c[(i + lag, j)];
        }
    }
    e
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes. Returns
/// eigenvalues in descending order with matching eigenvector columns.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let d = a.nrows();
    let mut m = a.clone();
    let mut v = DMatrix::<f64>::identity(d, d);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                if m[(p, q)].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * m[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&x, &y| m[(y, y)].total_cmp(&m[(x, x)]));
    let values = order.iter().map(|&j| m[(j, j)]).collect();
    let vectors = DMatrix::from_fn(d, d, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Smallest `k` with `Σ_{j≤k} λ_j ≥ v Σ_j λ_j` over the non-negative part of the spectrum.
pub fn reference_rank(values: &[f64], fraction: f64) -> usize {
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let mut cum = 0.0;
    for (k, v) in values.iter().enumerate() {
        cum += v.max(0.0);
        if cum >= fraction * total {
            return k + 1;
        }
    }
    values.len()
}

/// `C Cᵀ` with `C` the leading eigenvectors chosen by the variance rule.
pub fn reference_projector(sigma: &DMatrix<f64>, fraction: f64) -> DMatrix<f64> {
    let (values, vectors) = jacobi_eigen(sigma);
    let k = reference_rank(&values, fraction);
    let c = vectors.columns(0, k);
    &c * c.transpose()
}

/// `Σ_i u_i^m Γ̂_i / Σ_i u_i^m`.
pub fn reference_common(blocks: &[DMatrix<f64>], u: &[f64], m: f64) -> DMatrix<f64> {
    let d = blocks[0].nrows();
    let mut num = DMatrix::zeros(d, d);
    let mut den = 0.0;
    for (b, &ui) in blocks.iter().zip(u) {
        num += b * ui.powf(m);
        den += ui.powf(m);
    }
    num / den
}

/// `u_is = ℓ_is^{-1/(m-1)} / Σ_s' ℓ_is'^{-1/(m-1)}`.
pub fn reference_memberships(losses: &DMatrix<f64>, m: f64) -> DMatrix<f64> {
    let q = 1.0 / (m - 1.0);
    let mut u = losses.map(|l| l.powf(-q));
    for mut row in u.row_iter_mut() {
        let total = row.sum();
        row /= total;
    }
    u
}

/// Regular columns `r_is^{-q} / (Σ_s' r_is'^{-q} + δ^{-2q})`, noise column
/// `δ^{-2q} / (…)`, `q = 1/(m-1)`.
pub fn reference_noise_memberships(errors: &DMatrix<f64>, m: f64, delta_sq: f64) -> DMatrix<f64> {
    let q = 1.0 / (m - 1.0);
    let (n, s) = errors.shape();
    let mut u = DMatrix::zeros(n, s + 1);
    for i in 0..n {
        let noise = delta_sq.powf(-q);
        let mut total = noise;
        for c in 0..s {
            total += errors[(i, c)].powf(-q);
        }
        for c in 0..s {
            u[(i, c)] = errors[(i, c)].powf(-q) / total;
        }
        u[(i, s)] = noise / total;
    }
    u
}

/// Rand and adjusted Rand indices by enumerating every pair.
pub fn reference_pair_indices(a: &[usize], b: &[usize]) -> (f64, Option<f64>) {
    let (mut both, mut a_only, mut b_only, mut neither) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            match (a[i] == a[j], b[i] == b[j]) {
                (true, true) => both += 1.0,
                (true, false) => a_only += 1.0,
                (false, true) => b_only += 1.0,
                (false, false) => neither += 1.0,
            }
        }
    }
    let total = both + a_only + b_only + neither;
    let ri = (both + neither) / total;
    let den = (both + a_only) * (a_only + neither) + (both + b_only) * (b_only + neither);
    let ari = (den != 0.0).then(|| 2.0 * (both * neither - a_only * b_only) / den);
    (ri, ari)
}

/// Runs every comparison on one instance and returns the number of checks made.
pub fn check_instance(inst: &Instance) -> Result<usize, String> {
    let mut ck = Checker { seed: inst.seed, checks: 0 };
    let err = |e: rfcpca_core::Error| format!("instance {}: library error {e}", inst.seed);
    let n = inst.series.len();
    let m = inst.fuzziness;
    let v = inst.variance_fraction;
    let lags = 1..=inst.max_lag;
    let dataset = MtsDataset::new(inst.series.clone()).map_err(err)?;
    let raw = PreparedDataset::with_scale(&dataset, inst.max_lag, ErrorScale::Raw).map_err(err)?;
    let per_sample = PreparedDataset::with_scale(&dataset, inst.max_lag, ErrorScale::PerSample).map_err(err)?;

    let blocks: Vec<Vec<DMatrix<f64>>> =
        inst.series.iter().map(|x| lags.clone().map(|l| reference_block(x, l)).collect()).collect();
    for (i, x) in inst.series.iter().enumerate() {
        for l in lags.clone() {
            let want = &blocks[i][l - 1];
            ck.matrix("lagged block covariance", &block_covariance(x, l).map_err(err)?, want)?;
            ck.matrix("prepared block covariance", raw.blocks(i).at(l), want)?;
        }
    }

    let u = MembershipMatrix::new(inst.memberships.clone(), m).map_err(err)?;
    let subspaces = update_subspaces(&raw, &u, CLUSTERS, v, None).map_err(err)?;
    let mut projectors = Vec::new();
    for s in 0..CLUSTERS {
        let w = u.column(s);
        let mut per_lag = Vec::new();
        for l in lags.clone() {
            let lag_blocks: Vec<DMatrix<f64>> = blocks.iter().map(|b| b[l - 1].clone()).collect();
            let sigma = reference_common(&lag_blocks, &w, m);
            let refs: Vec<&DMatrix<f64>> = (0..n).map(|i| raw.blocks(i).at(l)).collect();
            ck.matrix("weighted common covariance", &weighted_common_covariance(&refs, &w, m).map_err(err)?, &sigma)?;
            let p = reference_projector(&sigma, v);
            ck.matrix("cluster projector", &subspaces.projector(s, l), &p)?;
            per_lag.push(p);
        }
        projectors.push(per_lag);
    }

    let mut r2 = DMatrix::zeros(n, CLUSTERS);
    let mut energy = DMatrix::zeros(n, CLUSTERS);
    for (i, x) in inst.series.iter().enumerate() {
        for s in 0..CLUSTERS {
            for l in lags.clone() {
                let e = reference_embedding(x, l);
                let residual = &e - &e * &projectors[s][l - 1];
                r2[(i, s)] += residual.norm_squared();
                energy[(i, s)] += e.norm_squared();
            }
        }
    }
    ck.matrix_scaled("reconstruction errors", &compute_errors(&raw, &subspaces), &r2, energy.norm())?;
    let per_t = |m: &DMatrix<f64>| DMatrix::from_fn(n, CLUSTERS, |i, s| m[(i, s)] / inst.series[i].nrows() as f64);
    let r2_scaled = per_t(&r2);
    let scaled_subspaces = update_subspaces(&per_sample, &u, CLUSTERS, v, None).map_err(err)?;
    let errors = compute_errors(&per_sample, &scaled_subspaces);
    if scaled_subspaces.ranks().iter().any(|&k| k == 2 * inst.series[0].ncols()) {
        return Err(format!("instance {}: every axis retained, the instance is degenerate", inst.seed));
    }
    ck.matrix_scaled("per-sample reconstruction errors", &errors, &r2_scaled, per_t(&energy).norm())?;

    ck.matrix("squared-loss memberships", update_memberships_fcpca(&errors, m).map_err(err)?.values(), &reference_memberships(&errors, m))?;

    let mut min_sum = 0.0;
    for i in 0..n {
        min_sum += (0..CLUSTERS).map(|s| errors[(i, s)]).fold(f64::INFINITY, f64::min);
    }
    let beta_ref = n as f64 / min_sum;
    let beta = estimate_beta(&errors).map_err(err)?;
    ck.scalar("beta", beta, beta_ref)?;
    let exp_losses = errors.map(|r| 1.0 - (-beta_ref * r).exp());
    ck.matrix(
        "exponential-loss memberships",
        update_memberships_exponential(&errors, m, beta).map_err(err)?.values(),
        &reference_memberships(&exp_losses, m),
    )?;

    let lambda = 0.25 + (inst.seed % 4) as f64 * 0.25;
    let delta_ref = lambda * errors.iter().sum::<f64>() / (n * CLUSTERS) as f64;
    let delta = update_noise_distance(&errors, lambda).map_err(err)?;
    ck.scalar("noise distance", delta, delta_ref)?;
    ck.matrix(
        "noise-cluster memberships",
        update_memberships_noise(&errors, m, delta).map_err(err)?.values(),
        &reference_noise_memberships(&errors, m, delta_ref),
    )?;

    let mut scaled_projectors = Vec::new();
    for s in 0..CLUSTERS {
        scaled_projectors.push(lags.clone().map(|l| scaled_subspaces.projector(s, l)).collect::<Vec<_>>());
    }
    let mut d_ref = f64::INFINITY;
    for a in 0..CLUSTERS {
        for b in a + 1..CLUSTERS {
            let mut d = 0.0;
            for l in lags.clone() {
                d += (&scaled_projectors[a][l - 1] - &scaled_projectors[b][l - 1]).norm_squared();
            }
            d_ref = d_ref.min(d);
        }
    }
    ck.scalar("prototype separation", prototype_separation(&scaled_subspaces).map_err(err)?, d_ref)?;

    let mut j_ref = 0.0;
    for i in 0..n {
        for s in 0..CLUSTERS {
            j_ref += u.get(i, s).powf(m) * r2_scaled[(i, s)];
        }
    }
    let fit = FitResult {
        memberships: u.clone(),
        subspaces: scaled_subspaces,
        errors,
        objective_trace: vec![j_ref],
        iterations: 0,
        converged: true,
        params: VariantParams::Fcpca,
        options: FitOptions::new(CLUSTERS, m),
    };
    ck.scalar("validity index", cvi(&fit).map_err(err)?, j_ref / (n as f64 * d_ref))?;

    let mut r = rng::seeded(inst.seed ^ 0xa11);
    let len = r.random_range(4..=30);
    let ka = r.random_range(2..=4);
    let kb = r.random_range(2..=4);
    let a: Vec<usize> = (0..len).map(|_| r.random_range(0..ka)).collect();
    let b: Vec<usize> = (0..len).map(|_| r.random_range(0..kb)).collect();
    let (ri, ari) = reference_pair_indices(&a, &b);
    ck.scalar("Rand index", rand_index(&a, &b).map_err(err)?, ri)?;
    if let Some(ari) = ari {
        let got = adjusted_rand_index(&a, &b).map_err(err)?;
        // ARI can be exactly 0, where a relative error is meaningless.
        if ari.abs() < 1e-12 {
            ck.checks += 1;
            if got.abs() > REL_TOL {
                return Err(format!("instance {}: adjusted Rand index {got:e}, reference 0", inst.seed));
            }
        } else {
            ck.scalar("adjusted Rand index", got, ari)?;
        }
    }
    Ok(ck.checks)
}

/// All instances; returns the total number of passed comparisons.
pub fn run() -> Result<usize, String> {
    let mut total = 0;
    for seed in 0..INSTANCES {
        total += check_instance(&instance(seed))?;
    }
    Ok(total)
}
