//! Synthetic EEG benchmark.
//!
//! Clean trials mix five band-limited AR(2) latents through a group-specific
//! non-negative mixing matrix. Two artifact models can be injected on top:
//! Hann-windowed high-frequency bursts and half-sine frontal eye blinks.
//! Every random choice is recorded in a [`SimManifest`], and replaying the
//! manifest's events on the clean data reproduces the contaminated data bit
//! for bit.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::MtsDataset;
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed, RNG_NAME};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

const BURN_IN: usize = 200;
const FILTER_PAD: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandSpec {
    pub band: Band,
    pub peak_hz: f64,
    pub sharpness: f64,
}

/// δ, θ, α, β, γ with peaks (2, 6, 10, 22.5, 37.5) Hz.
pub fn default_bands() -> Vec<BandSpec> {
    vec![
        BandSpec { band: Band::Delta, peak_hz: 2.0, sharpness: 0.05 },
        BandSpec { band: Band::Theta, peak_hz: 6.0, sharpness: 0.05 },
        BandSpec { band: Band::Alpha, peak_hz: 10.0, sharpness: 0.05 },
        BandSpec { band: Band::Beta, peak_hz: 22.5, sharpness: 0.08 },
        BandSpec { band: Band::Gamma, peak_hz: 37.5, sharpness: 0.10 },
    ]
}

/// `φ₁ = (2/M) cos(2π f / f_s)`, `φ₂ = −1/M²` with `M = e^κ`.
pub fn ar2_coefficients(freq: f64, sharpness: f64, sampling_rate: f64) -> Result<(f64, f64)> {
    if !(freq > 0.0 && freq < sampling_rate / 2.0 && sharpness > 0.0 && sharpness.is_finite()) {
        return Err(Error::InvalidBand { freq, sharpness, sampling_rate });
    }
    let modulus = libm::exp(sharpness);
    let phi1 = 2.0 / modulus * libm::cos(2.0 * PI * freq / sampling_rate);
    let phi2 = -1.0 / (modulus * modulus);
    Ok((phi1, phi2))
}

/// Band-pass applied to each latent: a second-order Butterworth high-pass and
/// low-pass in cascade, run forward then backward (zero phase).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    /// Edges at `f_b (1 ∓ edge_factor)`.
    pub edge_factor: f64,
    pub min_edge_hz: f64,
    /// Upper edge is clamped to this fraction of Nyquist.
    pub max_edge_nyquist: f64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self { edge_factor: 0.4, min_edge_hz: 0.5, max_edge_nyquist: 0.95 }
    }
}

impl FilterSpec {
    pub fn edges(&self, peak_hz: f64, sampling_rate: f64) -> (f64, f64) {
        let lo = (peak_hz * (1.0 - self.edge_factor)).max(self.min_edge_hz);
        let hi = (peak_hz * (1.0 + self.edge_factor)).min(self.max_edge_nyquist * sampling_rate / 2.0);
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn butterworth(cutoff: f64, sampling_rate: f64, highpass: bool) -> Self {
        let w0 = 2.0 * PI * cutoff / sampling_rate;
        let (sin, cos) = (libm::sin(w0), libm::cos(w0));
        let alpha = sin / core::f64::consts::SQRT_2;
        let a0 = 1.0 + alpha;
        let b = if highpass {
            [(1.0 + cos) / 2.0, -(1.0 + cos), (1.0 + cos) / 2.0]
        } else {
            [(1.0 - cos) / 2.0, 1.0 - cos, (1.0 - cos) / 2.0]
        };
        Self { b: [b[0] / a0, b[1] / a0, b[2] / a0], a: [-2.0 * cos / a0, (1.0 - alpha) / a0] }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut z1, mut z2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let input = *v;
            let out = self.b[0] * input + z1;
            z1 = self.b[1] * input - self.a[0] * out + z2;
            z2 = self.b[2] * input - self.a[1] * out;
            *v = out;
        }
    }
}

fn band_pass_zero_phase(x: &mut [f64], lo: f64, hi: f64, sampling_rate: f64) {
    let stages = [Biquad::butterworth(lo, sampling_rate, true), Biquad::butterworth(hi, sampling_rate, false)];
    for st in &stages {
        st.run(x);
    }
    x.reverse();
    for st in &stages {
        st.run(x);
    }
    x.reverse();
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let sd = libm::sqrt(var);
    for v in x.iter_mut() {
        *v = (*v - mean) / sd;
    }
}

/// Sample standard deviation (divisor `n − 1`) of each column.
pub fn column_sd(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / n;
            libm::sqrt(c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
        })
        .collect()
}

/// One AR(2) latent per band: burn-in, standardise, band-pass, standardise again.
/// Returns a `T × bands.len()` matrix.
pub fn simulate_latents(
    len: usize,
    sampling_rate: f64,
    bands: &[BandSpec],
    filter: &FilterSpec,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if len < 64 {
        return Err(Error::InvalidShape("latent series need at least 64 samples"));
    }
    let mut out = DMatrix::zeros(len, bands.len());
    for (k, band) in bands.iter().enumerate() {
        let (phi1, phi2) = ar2_coefficients(band.peak_hz, band.sharpness, sampling_rate)?;
        let mut r = rng::seeded(derive_seed(seed, &[k as u64]));
        let total = BURN_IN + 2 * FILTER_PAD + len;
        let mut x = vec![0.0; total];
        for t in 0..total {
            let e: f64 = StandardNormal.sample(&mut r);
            let x1 = if t >= 1 { x[t - 1] } else { 0.0 };
            let x2 = if t >= 2 { x[t - 2] } else { 0.0 };
            x[t] = phi1 * x1 + phi2 * x2 + e;
        }
        let mut kept = x.split_off(BURN_IN);
        standardize(&mut kept);
        let (lo, hi) = filter.edges(band.peak_hz, sampling_rate);
        band_pass_zero_phase(&mut kept, lo, hi, sampling_rate);
        let mut core_part = kept[FILTER_PAD..FILTER_PAD + len].to_vec();
        standardize(&mut core_part);
        out.set_column(k, &nalgebra::DVector::from_vec(core_part));
    }
    Ok(out)
}

/// Which latent rows dominate each group's channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixingConfig {
    /// Dominant latent indices per group.
    pub dominant: Vec<Vec<usize>>,
    /// Per-column dominant mass is drawn uniformly from this range.
    pub dominant_mass: (f64, f64),
}

impl Default for MixingConfig {
    fn default() -> Self {
        // group 1: δ, θ, α, γ; group 2: θ, β
        Self { dominant: vec![vec![0, 1, 2, 4], vec![1, 3]], dominant_mass: (0.8, 0.95) }
    }
}

/// `B × p` non-negative mixing matrix with unit column sums. Each column puts a
/// random share in `dominant_mass` on the group's dominant rows (split by
/// normalised uniforms) and spreads the rest evenly over the other rows.
pub fn mixing_matrix(
    group: usize,
    channels: usize,
    n_latents: usize,
    config: &MixingConfig,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if channels < 2 {
        return Err(Error::InvalidShape("mixing needs at least two channels"));
    }
    let dominant = config.dominant.get(group).ok_or(Error::InvalidParameter("unknown group"))?;
    if dominant.is_empty() || dominant.iter().any(|&d| d >= n_latents) {
        return Err(Error::InvalidParameter("dominant latent index out of range"));
    }
    let (lo, hi) = config.dominant_mass;
    if !(0.0 < lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidParameter("dominant mass range must lie in (0, 1]"));
    }
    let others: Vec<usize> = (0..n_latents).filter(|b| !dominant.contains(b)).collect();
    let mut r = rng::seeded(seed);
    let mut a = DMatrix::zeros(n_latents, channels);
    for j in 0..channels {
        let mass = if others.is_empty() { 1.0 } else { lo + (hi - lo) * r.random::<f64>() };
        let draws: Vec<f64> = dominant.iter().map(|_| 1.0 - r.random::<f64>()).collect();
        let total: f64 = draws.iter().sum();
        for (&b, w) in dominant.iter().zip(&draws) {
            a[(b, j)] = mass * w / total;
        }
        for &b in &others {
            a[(b, j)] = (1.0 - mass) / others.len() as f64;
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthSpec {
    Fixed(usize),
    /// Inclusive range, drawn uniformly per trial.
    Range(usize, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_per_group: usize,
    pub channels: usize,
    pub length: LengthSpec,
    pub sampling_rate: f64,
    pub bands: Vec<BandSpec>,
    pub filter: FilterSpec,
    pub mixing: MixingConfig,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_per_group: usize, channels: usize, length: LengthSpec, seed: u64) -> Self {
        Self {
            n_per_group,
            channels,
            length,
            sampling_rate: 100.0,
            bands: default_bands(),
            filter: FilterSpec::default(),
            mixing: MixingConfig::default(),
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Contamination {
    None,
    Burst,
    Eyeblink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArtifactShape {
    /// Hann-windowed sine at `freq_hz`.
    Burst { freq_hz: f64 },
    /// Half-sine deflection with sign `polarity`.
    Blink { polarity: f64 },
}

/// One injected artifact. `start` is a 0-based sample index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEvent {
    pub trial: usize,
    pub start: usize,
    pub duration: usize,
    pub channels: Vec<usize>,
    pub amplitude: f64,
    pub shape: ArtifactShape,
    /// Clean-trial channel standard deviations, aligned with `channels`.
    pub channel_sd: Vec<f64>,
}

impl ArtifactEvent {
    /// Unit waveform `w_q`, `q = 0..duration`.
    pub fn waveform(&self, sampling_rate: f64) -> Vec<f64> {
        let tau = self.duration;
        match self.shape {
            ArtifactShape::Burst { freq_hz } => hann_tone(tau, freq_hz, sampling_rate),
            ArtifactShape::Blink { polarity } => half_sine(tau).into_iter().map(|b| polarity * b).collect(),
        }
    }
}

fn hann_tone(tau: usize, freq_hz: f64, sampling_rate: f64) -> Vec<f64> {
    (0..tau)
        .map(|q| {
            let h = hann(q, tau);
            libm::sin(2.0 * PI * freq_hz * q as f64 / sampling_rate) * h
        })
        .collect()
}

/// `h_q = ½(1 − cos(2π q / (τ − 1)))`.
pub fn hann(q: usize, tau: usize) -> f64 {
    0.5 * (1.0 - libm::cos(2.0 * PI * q as f64 / (tau as f64 - 1.0)))
}

/// `b_q = sin(π q / (τ − 1))`.
pub fn half_sine(tau: usize) -> Vec<f64> {
    (0..tau).map(|q| libm::sin(PI * q as f64 / (tau as f64 - 1.0))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstConfig {
    pub rho: f64,
    pub amplitude: f64,
    pub duration_sec: f64,
    pub max_bursts: usize,
    pub freq_range_hz: (f64, f64),
    pub channel_fraction: f64,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            rho: 0.20,
            amplitude: 5.0,
            duration_sec: 0.25,
            max_bursts: 3,
            freq_range_hz: (30.0, 80.0),
            channel_fraction: 0.10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlinkConfig {
    pub rho: f64,
    /// Frontal channel set; `None` means the first `⌈p/4⌉` channels.
    pub frontal: Option<Vec<usize>>,
    pub channel_fraction: f64,
    pub duration_sec: (f64, f64),
    pub amplitude: (f64, f64),
    pub max_blinks: usize,
}

impl Default for BlinkConfig {
    fn default() -> Self {
        Self {
            rho: 0.40,
            frontal: None,
            channel_fraction: 0.5,
            duration_sec: (0.20, 0.40),
            amplitude: (4.0, 8.0),
            max_blinks: 2,
        }
    }
}

impl BlinkConfig {
    pub fn frontal_channels(&self, channels: usize) -> Vec<usize> {
        match &self.frontal {
            Some(f) => f.clone(),
            None => (0..channels.div_ceil(4)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContaminationConfig {
    None,
    Burst(BurstConfig),
    Eyeblink(BlinkConfig),
}

/// Ground truth and provenance for a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimManifest {
    pub schema_version: u32,
    pub rng: String,
    pub config: SimConfig,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
    /// Row-major `B × p` mixing matrix per group.
    pub mixing_matrices: Vec<Vec<Vec<f64>>>,
    pub contamination: Contamination,
    pub contamination_config: ContaminationConfig,
    pub contamination_seed: Option<u64>,
    /// Sorted 0-based indices of contaminated trials.
    pub contaminated: Vec<usize>,
    pub events: Vec<ArtifactEvent>,
}

impl SimManifest {
    pub fn n_trials(&self) -> usize {
        self.labels.len()
    }
}

fn trial_lengths(config: &SimConfig) -> Result<Vec<usize>> {
    let n = 2 * config.n_per_group;
    match config.length {
        LengthSpec::Fixed(t) => Ok(vec![t; n]),
        LengthSpec::Range(lo, hi) => {
            if lo > hi {
                return Err(Error::InvalidParameter("length range is reversed"));
            }
            let mut r = rng::seeded(derive_seed(config.seed, &[2]));
            Ok((0..n).map(|_| r.random_range(lo..=hi)).collect())
        }
    }
}

/// `2 · n_per_group` trials, group 0 first. Trial `i` is `Z_i A_g`.
pub fn generate_clean_dataset(config: &SimConfig) -> Result<(MtsDataset, SimManifest)> {
    if config.n_per_group == 0 {
        return Err(Error::InvalidShape("need at least one trial per group"));
    }
    if !(config.sampling_rate > 0.0) {
        return Err(Error::InvalidParameter("sampling rate must be positive"));
    }
    let b = config.bands.len();
    let mixing: Vec<DMatrix<f64>> = (0..2)
        .map(|g| mixing_matrix(g, config.channels, b, &config.mixing, derive_seed(config.seed, &[0, g as u64])))
        .collect::<Result<_>>()?;
    let lengths = trial_lengths(config)?;
    let mut series = Vec::with_capacity(lengths.len());
    let mut labels = Vec::with_capacity(lengths.len());
    for (i, &len) in lengths.iter().enumerate() {
        let g = i / config.n_per_group;
        let z = simulate_latents(len, config.sampling_rate, &config.bands, &config.filter, derive_seed(config.seed, &[1, i as u64]))?;
        series.push(z * &mixing[g]);
        labels.push(g);
    }
    let dataset = MtsDataset::new(series)?.with_labels(labels.clone())?;
    let manifest = SimManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        rng: RNG_NAME.into(),
        config: config.clone(),
        lengths,
        labels,
        mixing_matrices: mixing
            .iter()
            .map(|a| a.row_iter().map(|r| r.iter().copied().collect()).collect())
            .collect(),
        contamination: Contamination::None,
        contamination_config: ContaminationConfig::None,
        contamination_seed: None,
        contaminated: Vec::new(),
        events: Vec::new(),
    };
    Ok((dataset, manifest))
}

/// Adds every event to a copy of the clean series, in manifest order.
pub fn apply_events(clean: &MtsDataset, events: &[ArtifactEvent], sampling_rate: f64) -> Result<MtsDataset> {
    let mut series = clean.series().to_vec();
    for ev in events {
        let x = series.get_mut(ev.trial).ok_or(Error::InvalidShape("event trial out of range"))?;
        if ev.start + ev.duration > x.nrows() || ev.channels.iter().any(|&j| j >= x.ncols()) {
            return Err(Error::InvalidShape("event does not fit inside its trial"));
        }
        let wave = ev.waveform(sampling_rate);
        for (&j, &sd) in ev.channels.iter().zip(&ev.channel_sd) {
            let scale = ev.amplitude * sd;
            for (q, w) in wave.iter().enumerate() {
                x[(ev.start + q, j)] += scale * w;
            }
        }
    }
    let mut out = MtsDataset::new(series)?;
    if let Some(l) = clean.labels() {
        out = out.with_labels(l.to_vec())?;
    }
    Ok(out)
}

/// Rebuilds the contaminated dataset from a clean one and a manifest.
pub fn replay(clean: &MtsDataset, manifest: &SimManifest) -> Result<MtsDataset> {
    apply_events(clean, &manifest.events, manifest.config.sampling_rate)?.with_outliers(manifest.contaminated.clone())
}

fn pick_trials(r: &mut rng::Rng, n_per_group: usize, rho: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::InvalidParameter("contamination proportion must lie in [0, 1]"));
    }
    let k = libm::ceil(rho * n_per_group as f64) as usize;
    let mut out = Vec::new();
    for g in 0..2 {
        let mut chosen: Vec<usize> = index::sample(r, n_per_group, k.min(n_per_group)).into_vec();
        chosen.sort_unstable();
        out.extend(chosen.into_iter().map(|i| g * n_per_group + i));
    }
    Ok(out)
}

fn pick_channels(r: &mut rng::Rng, pool: &[usize], count: usize) -> Vec<usize> {
    let mut c: Vec<usize> = index::sample(r, pool.len(), count.min(pool.len())).into_iter().map(|k| pool[k]).collect();
    c.sort_unstable();
    c
}

fn contaminated_manifest(
    manifest: &SimManifest,
    kind: Contamination,
    config: ContaminationConfig,
    seed: u64,
    contaminated: Vec<usize>,
    events: Vec<ArtifactEvent>,
) -> SimManifest {
    SimManifest {
        contamination: kind,
        contamination_config: config,
        contamination_seed: Some(seed),
        contaminated,
        events,
        ..manifest.clone()
    }
}

/// Hann-windowed tone bursts on `⌈ρ n_per_group⌉` trials per group.
pub fn inject_bursts(
    clean: &MtsDataset,
    manifest: &SimManifest,
    config: &BurstConfig,
    seed: u64,
) -> Result<(MtsDataset, SimManifest)> {
    let fs = manifest.config.sampling_rate;
    let tau = libm::floor(config.duration_sec * fs) as usize;
    let min_len = clean.min_len();
    if tau >= min_len {
        return Err(Error::BurstTooLong { tau, min_len });
    }
    if tau < 2 || config.max_bursts == 0 {
        return Err(Error::InvalidParameter("bursts need at least two samples and one burst per trial"));
    }
    let p = clean.channels();
    let n_chan = libm::ceil(config.channel_fraction * p as f64) as usize;
    let all_channels: Vec<usize> = (0..p).collect();
    let mut r = rng::seeded(seed);
    let trials = pick_trials(&mut r, manifest.config.n_per_group, config.rho)?;
    let mut events = Vec::new();
    for &i in &trials {
        let x = clean.get(i);
        let sd = column_sd(x);
        let count = r.random_range(1..=config.max_bursts);
        for _ in 0..count {
            let start = r.random_range(0..x.nrows() - tau);
            let (flo, fhi) = config.freq_range_hz;
            let freq_hz = flo + (fhi - flo) * r.random::<f64>();
            let channels = pick_channels(&mut r, &all_channels, n_chan);
            events.push(ArtifactEvent {
                trial: i,
                start,
                duration: tau,
                channel_sd: channels.iter().map(|&j| sd[j]).collect(),
                channels,
                amplitude: config.amplitude,
                shape: ArtifactShape::Burst { freq_hz },
            });
        }
    }
    let m = contaminated_manifest(manifest, Contamination::Burst, ContaminationConfig::Burst(*config), seed, trials, events);
    Ok((replay(clean, &m)?, m))
}

/// Half-sine deflections on frontal channels of `⌈ρ n_per_group⌉` trials per group.
pub fn inject_eyeblinks(
    clean: &MtsDataset,
    manifest: &SimManifest,
    config: &BlinkConfig,
    seed: u64,
) -> Result<(MtsDataset, SimManifest)> {
    let fs = manifest.config.sampling_rate;
    let (dlo, dhi) = config.duration_sec;
    let (alo, ahi) = config.amplitude;
    if !(0.0 < dlo && dlo <= dhi) || !(0.0 < alo && alo <= ahi) || config.max_blinks == 0 {
        return Err(Error::InvalidParameter("invalid blink configuration"));
    }
    let longest = libm::floor(dhi * fs) as usize;
    let min_len = clean.min_len();
    if longest >= min_len {
        return Err(Error::BlinkTooLong { tau: longest, min_len });
    }
    let p = clean.channels();
    let frontal = config.frontal_channels(p);
    if frontal.is_empty() || frontal.iter().any(|&j| j >= p) {
        return Err(Error::InvalidParameter("frontal channel set is empty or out of range"));
    }
    let n_chan = libm::ceil(config.channel_fraction * frontal.len() as f64) as usize;
    let mut r = rng::seeded(seed);
    let trials = pick_trials(&mut r, manifest.config.n_per_group, config.rho)?;
    let mut events = Vec::new();
    for &i in &trials {
        let x = clean.get(i);
        let sd = column_sd(x);
        let count = r.random_range(1..=config.max_blinks);
        for _ in 0..count {
            let tau = (libm::floor((dlo + (dhi - dlo) * r.random::<f64>()) * fs) as usize).max(2);
            let start = r.random_range(0..x.nrows() - tau);
            let channels = pick_channels(&mut r, &frontal, n_chan);
            let amplitude = alo + (ahi - alo) * r.random::<f64>();
            let polarity = if r.random::<bool>() { 1.0 } else { -1.0 };
            events.push(ArtifactEvent {
                trial: i,
                start,
                duration: tau,
                channel_sd: channels.iter().map(|&j| sd[j]).collect(),
                channels,
                amplitude,
                shape: ArtifactShape::Blink { polarity },
            });
        }
    }
    let m = contaminated_manifest(
        manifest,
        Contamination::Eyeblink,
        ContaminationConfig::Eyeblink(config.clone()),
        seed,
        trials,
        events,
    );
    Ok((replay(clean, &m)?, m))
}

/// Clean generation followed by the configured contamination.
pub fn simulate(config: &SimConfig, contamination: &ContaminationConfig, contamination_seed: u64) -> Result<(MtsDataset, SimManifest)> {
    let (clean, manifest) = generate_clean_dataset(config)?;
    match contamination {
        ContaminationConfig::None => Ok((clean.with_outliers(Vec::new())?, manifest)),
        ContaminationConfig::Burst(b) => inject_bursts(&clean, &manifest, b, contamination_seed),
        ContaminationConfig::Eyeblink(b) => inject_eyeblinks(&clean, &manifest, b, contamination_seed),
    }
}

/// Small planted benchmark: two groups of series living in orthogonal 1-D
/// channel subspaces plus light isotropic noise, followed by `n_outliers`
/// gross outliers (isotropic noise with standard deviation `outlier_scale`).
/// Returns the dataset (outliers last, flagged in the dataset) and labels,
/// where outliers carry label 2.
pub fn planted_two_subspace(
    n_per_group: usize,
    channels: usize,
    len: usize,
    n_outliers: usize,
    outlier_scale: f64,
    seed: u64,
) -> (MtsDataset, Vec<usize>) {
    assert!(channels >= 2, "planted data needs two channels");
    let mut r = rng::seeded(derive_seed(seed, &[0]));
    let mut dirs: Vec<nalgebra::DVector<f64>> = Vec::new();
    while dirs.len() < 2 {
        let mut v = nalgebra::DVector::from_fn(channels, |_, _| StandardNormal.sample(&mut r));
        for d in &dirs {
            let proj = d.dot(&v);
            v.axpy(-proj, d, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-6 {
            dirs.push(v / norm);
        }
    }
    let mut series = Vec::new();
    let mut labels = Vec::new();
    for g in 0..2 {
        for k in 0..n_per_group {
            let mut rr = rng::seeded(derive_seed(seed, &[1, (g * n_per_group + k) as u64]));
            let mut z = 0.0;
            let mut x = DMatrix::zeros(len, channels);
            for t in 0..len {
                let e: f64 = StandardNormal.sample(&mut rr);
                z = 0.6 * z + e;
                for j in 0..channels {
                    let noise: f64 = StandardNormal.sample(&mut rr);
                    x[(t, j)] = z * dirs[g][j] + 0.05 * noise;
                }
            }
            series.push(x);
            labels.push(g);
        }
    }
    let first_outlier = series.len();
    for k in 0..n_outliers {
        let mut rr = rng::seeded(derive_seed(seed, &[2, k as u64]));
        series.push(DMatrix::from_fn(len, channels, |_, _| {
            let e: f64 = StandardNormal.sample(&mut rr);
            outlier_scale * e
        }));
        labels.push(2);
    }
    let ds = MtsDataset::new(series)
        .and_then(|d| d.with_labels(labels.clone()))
        .and_then(|d| d.with_outliers((first_outlier..first_outlier + n_outliers).collect()))
        .expect("planted data is well formed");
    (ds, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar2_examples() {
        let (p1, p2) = ar2_coefficients(2.0, 0.05, 100.0).unwrap();
        assert!((p1 - 2.0 * libm::exp(-0.05) * libm::cos(0.04 * PI)).abs() < 1e-15);
        assert!((p1 - 1.8875).abs() < 1e-4);
        assert!((p2 + 0.9048).abs() < 1e-4);
        let (p1, p2) = ar2_coefficients(25.0, 1e-9, 100.0).unwrap();
        assert!(p1.abs() < 1e-8 && (p2 + 1.0).abs() < 1e-8);
        assert!(ar2_coefficients(50.0, 0.05, 100.0).is_err());
        assert!(ar2_coefficients(10.0, 0.0, 100.0).is_err());
    }

    #[test]
    fn default_bands_are_stationary() {
        for b in default_bands() {
            let (p1, p2) = ar2_coefficients(b.peak_hz, b.sharpness, 100.0).unwrap();
            assert!(p2.abs() < 1.0 && p1.abs() < 1.0 - p2);
        }
    }

    #[test]
    fn envelopes_vanish_at_ends() {
        assert!(hann(0, 25).abs() < 1e-15 && hann(24, 25).abs() < 1e-12);
        let b = half_sine(31);
        assert!(b[0].abs() < 1e-12 && b[30].abs() < 1e-12);
        assert!((b[15] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn latents_are_standardized() {
        let z = simulate_latents(400, 100.0, &default_bands(), &FilterSpec::default(), 4).unwrap();
        for c in z.column_iter() {
            let n = c.len() as f64;
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            assert!((var - 1.0).abs() < 1e-9);
        }
        assert_eq!(z, simulate_latents(400, 100.0, &default_bands(), &FilterSpec::default(), 4).unwrap());
    }

    #[test]
    fn mixing_columns_sum_to_one() {
        let cfg = MixingConfig::default();
        for g in 0..2 {
            let a = mixing_matrix(g, 16, 5, &cfg, 3 + g as u64).unwrap();
            for j in 0..16 {
                assert!((a.column(j).sum() - 1.0).abs() < 1e-12);
                let dom: f64 = cfg.dominant[g].iter().map(|&b| a[(b, j)]).sum();
                assert!(dom >= 0.8 - 1e-12);
            }
            assert!(a.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn burst_selects_ceil_rho_per_group() {
        let cfg = SimConfig::new(10, 8, LengthSpec::Fixed(200), 1);
        let (clean, man) = generate_clean_dataset(&cfg).unwrap();
        let (_, m) = inject_bursts(&clean, &man, &BurstConfig::default(), 2).unwrap();
        assert_eq!(m.contaminated.len(), 4);
        assert_eq!(m.contaminated.iter().filter(|&&i| i < 10).count(), 2);
        for ev in &m.events {
            assert_eq!(ev.duration, 25);
            assert_eq!(ev.channels.len(), 1);
            assert!(ev.start + ev.duration < 200);
        }
    }

    #[test]
    fn too_long_artifacts_are_rejected() {
        let mut cfg = SimConfig::new(2, 4, LengthSpec::Fixed(64), 1);
        cfg.sampling_rate = 400.0;
        let (clean, man) = generate_clean_dataset(&cfg).unwrap();
        assert_eq!(
            inject_bursts(&clean, &man, &BurstConfig::default(), 0).unwrap_err(),
            Error::BurstTooLong { tau: 100, min_len: 64 }
        );
        assert!(matches!(
            inject_eyeblinks(&clean, &man, &BlinkConfig::default(), 0).unwrap_err(),
            Error::BlinkTooLong { .. }
        ));
    }
}
