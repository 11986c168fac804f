//! The commands behind the binary. Each returns what it wrote so tests can
//! inspect results without parsing files.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DMatrix;
use rfcpca_core::analysis::{channel_contributions, noise_subspaces_from, principal_angles};
use rfcpca_core::evaluation::{evaluate_memberships, flag_outliers, EvalReport};
use rfcpca_core::robust::{default_lambda_grid, select_lambda_elbow, ElbowSelection, NoiseConfig};
use rfcpca_core::selection::{cvi, fit_candidate, grid_search, Candidate, SearchGrid, SelectionReport};
use rfcpca_core::simgen::{simulate as generate, SimManifest};
use rfcpca_core::{FitOptions, FitResult, MembershipMatrix, PreparedDataset, VariantKind, VariantParams};
use serde::{Deserialize, Serialize};

use crate::config::{ResolvedSimulation, SimulateConfig};
use crate::error::{CliError, CliResult};
use crate::io::{self, channel_names, load_dataset, trial_file_name, trial_files, write_json, write_rows, write_trial};
use crate::provenance::{Provenance, SCHEMA_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";

/// `manifest.json` next to the simulated trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDocument {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub resolved: ResolvedSimulation,
    pub simulation: SimManifest,
}

#[derive(Debug, Clone)]
pub struct SimulateOutcome {
    pub files: Vec<PathBuf>,
    pub manifest: ManifestDocument,
}

pub fn simulate(config_path: &Path, out_dir: &Path) -> CliResult<SimulateOutcome> {
    let config = SimulateConfig::load(config_path)?;
    simulate_config(&config, out_dir)
}

/// Refuses to write into a directory holding other CSV files, since every
/// CSV there would be read back as a trial.
pub fn simulate_config(config: &SimulateConfig, out_dir: &Path) -> CliResult<SimulateOutcome> {
    let resolved = config.resolve();
    let (ds, manifest) = generate(&resolved.simulation, &resolved.contamination, resolved.contamination_seed)
        .map_err(|e| CliError::Config(format!("{}: {e}", e.name())))?;
    io::create_dir(out_dir)?;
    let n = ds.len();
    let files: Vec<PathBuf> = (0..n).map(|i| out_dir.join(trial_file_name(i, n))).collect();
    let stray: Vec<PathBuf> = trial_files(out_dir)?.into_iter().filter(|f| !files.contains(f)).collect();
    if !stray.is_empty() {
        return Err(CliError::Usage(format!("{} already holds other CSV files, e.g. {}", out_dir.display(), stray[0].display())));
    }
    let names = channel_names(ds.channels());
    for (x, path) in ds.series().iter().zip(&files) {
        write_trial(path, x, &names)?;
    }
    let hash = io::dataset_hash(&files)?;
    let doc = ManifestDocument {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance::new(&resolved, Some(hash), resolved.simulation.seed),
        resolved,
        simulation: manifest,
    };
    write_json(&out_dir.join(MANIFEST_FILE), &doc)?;
    Ok(SimulateOutcome { files, manifest: doc })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum LambdaChoice {
    Auto,
    Fixed(f64),
}

impl FromStr for LambdaChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(LambdaChoice::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(LambdaChoice::Fixed(v)),
            _ => Err(format!("expected `auto` or a positive number, got {s:?}")),
        }
    }
}

/// Settings of one `fit` call; their JSON is what the config hash covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub variant: VariantKind,
    /// Grid search over the unset hyperparameters.
    pub auto: bool,
    pub clusters: Option<usize>,
    pub fuzziness: Option<f64>,
    pub alpha: Option<f64>,
    pub lambda: LambdaChoice,
    pub max_lag: usize,
    pub variance_fraction: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl FitSettings {
    pub fn new(variant: VariantKind) -> Self {
        Self {
            variant,
            auto: false,
            clusters: None,
            fuzziness: None,
            alpha: None,
            lambda: LambdaChoice::Auto,
            max_lag: 2,
            variance_fraction: 0.95,
            restarts: 3,
            seed: 0,
        }
    }

    fn clusters_or_default(&self) -> usize {
        self.clusters.unwrap_or(2)
    }

    fn fuzziness_or_default(&self) -> f64 {
        self.fuzziness.unwrap_or(2.0)
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl MatrixRecord {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut values = Vec::with_capacity(m.len());
        for r in m.row_iter() {
            values.extend(r.iter());
        }
        Self { rows: m.nrows(), cols: m.ncols(), values }
    }

    pub fn to_matrix(&self) -> CliResult<DMatrix<f64>> {
        if self.values.len() != self.rows * self.cols {
            return Err(CliError::Config(format!("{} values for a {}×{} matrix", self.values.len(), self.rows, self.cols)));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selected {
    pub clusters: usize,
    pub fuzziness: f64,
    pub alpha: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub selected: Selected,
    pub cvi: Option<f64>,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub flagged: Vec<usize>,
    pub params: VariantParams,
    pub options: FitOptions,
    /// `N × S`, noise column last for the noise variant.
    pub memberships: MatrixRecord,
    pub memberships_csv: String,
    pub errors: MatrixRecord,
    /// Axes per cluster, then per lag `1..=L`.
    pub axes: Vec<Vec<MatrixRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFailure {
    pub name: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDocument {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub variant: String,
    pub settings: FitSettings,
    pub channel_names: Vec<String>,
    pub model: Option<FittedModel>,
    pub error: Option<FitFailure>,
    pub selection: Option<SelectionReport>,
    pub elbow: Option<ElbowSelection>,
}

impl FitDocument {
    pub fn model(&self) -> CliResult<&FittedModel> {
        match (&self.model, &self.error) {
            (Some(m), _) => Ok(m),
            (None, Some(e)) => Err(CliError::Fit { name: e.name.clone(), message: e.message.clone() }),
            (None, None) => Err(CliError::Config("fit document has neither a model nor an error".into())),
        }
    }
}

fn memberships_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "fit".into());
    out.with_file_name(format!("{stem}.memberships.csv"))
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

struct Fitted {
    fit: FitResult,
    cvi: Option<f64>,
    selection: Option<SelectionReport>,
}

fn run_fit(prep: &PreparedDataset, settings: &FitSettings, noise: Option<NoiseConfig>) -> rfcpca_core::Result<Fitted> {
    let mut grid = SearchGrid::new(settings.variant);
    grid.variance_fraction = settings.variance_fraction;
    grid.noise = noise;
    if settings.auto {
        if let Some(s) = settings.clusters {
            grid = grid.with_clusters(vec![s]);
        }
        if let Some(m) = settings.fuzziness {
            grid = grid.with_fuzziness(vec![m]);
        }
        if let Some(a) = settings.alpha {
            grid = grid.with_alphas(vec![a]);
        }
        let (fit, report) = grid_search(prep, &grid, settings.seed, settings.restarts)?;
        Ok(Fitted { cvi: report.winner().cvi, fit, selection: Some(report) })
    } else {
        let c = Candidate { clusters: settings.clusters_or_default(), fuzziness: settings.fuzziness_or_default(), alpha: settings.alpha };
        let fit = fit_candidate(prep, &grid, &c, settings.seed)?;
        Ok(Fitted { cvi: cvi(&fit).ok(), fit, selection: None })
    }
}

fn describe(fit: &FitResult, cvi: Option<f64>, memberships_csv: String) -> FittedModel {
    let (alpha, lambda) = match &fit.params {
        VariantParams::Trimmed { alpha, .. } => (Some(*alpha), None),
        VariantParams::Noise { lambda, .. } => (None, Some(*lambda)),
        _ => (None, None),
    };
    FittedModel {
        selected: Selected { clusters: fit.options.clusters, fuzziness: fit.options.fuzziness, alpha, lambda },
        cvi,
        objective: fit.objective(),
        objective_trace: fit.objective_trace.clone(),
        iterations: fit.iterations,
        converged: fit.converged,
        flagged: flag_outliers(fit),
        params: fit.params.clone(),
        options: fit.options,
        memberships: MatrixRecord::from_matrix(fit.memberships.values()),
        memberships_csv,
        errors: MatrixRecord::from_matrix(&fit.errors),
        axes: (0..fit.subspaces.n_clusters())
            .map(|s| fit.subspaces.cluster_axes(s).iter().map(MatrixRecord::from_matrix).collect())
            .collect(),
    }
}

fn write_memberships(path: &Path, u: &DMatrix<f64>, params: &VariantParams) -> CliResult<()> {
    let substantive = if matches!(params, VariantParams::Noise { .. }) { u.ncols() - 1 } else { u.ncols() };
    let header: Vec<String> =
        (1..=u.ncols()).map(|s| if s > substantive { "noise".to_string() } else { format!("cluster{s}") }).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = u.row_iter().map(|r| r.iter().map(f64::to_string).collect()).collect();
    write_rows(path, &header, &rows)
}

/// Writes the fit document to `out` and the memberships to
/// `<stem>.memberships.csv` beside it. A failed fit still writes the
/// document, with the error name, and returns [`CliError::Fit`].
pub fn fit(data_dir: &Path, settings: &FitSettings, out: &Path) -> CliResult<FitDocument> {
    if settings.variant == VariantKind::Trimmed && settings.alpha.is_none() && !settings.auto {
        return Err(CliError::Usage("the trimmed variant needs --alpha or --auto".into()));
    }
    if settings.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    let data = load_dataset(data_dir)?;
    let csv_path = memberships_path(out);
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    io::create_dir(parent)?;
    if same_dir(parent, data_dir) {
        return Err(CliError::Usage(format!("{} would be read back as a trial; write outside the data directory", csv_path.display())));
    }
    let mut doc = FitDocument {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance::new(settings, Some(data.hash.clone()), settings.seed),
        variant: settings.variant.label().to_string(),
        settings: settings.clone(),
        channel_names: data.channel_names.clone(),
        model: None,
        error: None,
        selection: None,
        elbow: None,
    };
    let result = (|| -> rfcpca_core::Result<Fitted> {
        let prep = PreparedDataset::new(&data.dataset, settings.max_lag)?;
        let noise = if settings.variant == VariantKind::Noise {
            let lambda = match settings.lambda {
                LambdaChoice::Fixed(v) => v,
                LambdaChoice::Auto => {
                    let opts = FitOptions::new(settings.clusters_or_default(), settings.fuzziness_or_default())
                        .with_seed(settings.seed)
                        .with_variance_fraction(settings.variance_fraction);
                    let elbow = select_lambda_elbow(&prep, &opts, &default_lambda_grid(20), &NoiseConfig::new(1.0))?;
                    let lambda = elbow.lambda;
                    doc.elbow = Some(elbow);
                    lambda
                }
            };
            Some(NoiseConfig::new(lambda))
        } else {
            None
        };
        run_fit(&prep, settings, noise)
    })();
    match result {
        Ok(fitted) => {
            write_memberships(&csv_path, fitted.fit.memberships.values(), &fitted.fit.params)?;
            let csv_name = csv_path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            doc.model = Some(describe(&fitted.fit, fitted.cvi, csv_name));
            doc.selection = fitted.selection;
            write_json(out, &doc)?;
            Ok(doc)
        }
        Err(e) => {
            doc.error = Some(FitFailure { name: e.name().to_string(), message: e.to_string() });
            write_json(out, &doc)?;
            Err(CliError::fit(&e))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationDocument {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub variant: String,
    /// Rand index on the scored objects.
    pub acc: Option<f64>,
    pub ari: Option<f64>,
    /// Fraction of contaminated trials flagged.
    pub out: Option<f64>,
    pub false_positives: usize,
    pub flagged: Vec<usize>,
    pub contaminated: Vec<usize>,
    pub report: EvalReport,
}

#[derive(Serialize)]
struct EvaluationInputs<'a> {
    fit_config_hash: &'a str,
    manifest_config_hash: &'a str,
}

pub fn evaluate(fit_path: &Path, manifest_path: &Path, out: &Path) -> CliResult<EvaluationDocument> {
    let manifest: ManifestDocument = io::read_json(manifest_path)?;
    let fit: FitDocument = io::read_json(fit_path)?;
    let fit_hash = fit.provenance.dataset_hash.clone().unwrap_or_default();
    let data_hash = manifest.provenance.dataset_hash.clone().unwrap_or_default();
    if fit_hash != data_hash {
        return Err(CliError::HashMismatch { fit: fit_hash, data: data_hash });
    }
    let model = fit.model()?;
    let u = model.memberships.to_matrix()?;
    let sim = &manifest.simulation;
    let report = evaluate_memberships(&u, &model.params, &sim.labels, &sim.contaminated)
        .map_err(|e| CliError::Config(format!("fit does not match manifest: {e}")))?;
    let inputs = EvaluationInputs {
        fit_config_hash: &fit.provenance.config_hash,
        manifest_config_hash: &manifest.provenance.config_hash,
    };
    let doc = EvaluationDocument {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance::new(&inputs, Some(fit_hash), fit.provenance.seed),
        variant: fit.variant.clone(),
        acc: report.acc_rand,
        ari: report.acc_adjusted_rand,
        out: report.outlier_recall,
        false_positives: report.false_positives,
        flagged: report.flagged.clone(),
        contaminated: sim.contaminated.clone(),
        report,
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::create_dir(parent)?;
    }
    write_json(out, &doc)?;
    Ok(doc)
}

/// One line of the analysis CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisRow {
    /// `angle`, `contribution`, `noise_angle` or `noise_contribution`.
    pub kind: &'static str,
    pub cluster: String,
    pub other: String,
    pub lag: usize,
    /// Angle index (ascending) or channel index, 0-based.
    pub index: usize,
    pub channel: String,
    pub value: f64,
}

pub const ANALYSIS_HEADER: [&str; 7] = ["kind", "cluster", "other", "lag", "index", "channel", "value"];

/// Principal angles between every pair of clusters and per-channel
/// contributions of every cluster, per lag. For a noise-cluster fit, also a
/// subspace weighted by the noise memberships, compared against each regular
/// cluster. Angles are in radians.
pub fn analyze(fit_path: &Path, data_dir: &Path, out: &Path) -> CliResult<Vec<AnalysisRow>> {
    let fit: FitDocument = io::read_json(fit_path)?;
    let data = load_dataset(data_dir)?;
    let fit_hash = fit.provenance.dataset_hash.clone().unwrap_or_default();
    if fit_hash != data.hash {
        return Err(CliError::HashMismatch { fit: fit_hash, data: data.hash });
    }
    let model = fit.model()?;
    let p = data.dataset.channels();
    let names = &data.channel_names;
    let axes: Vec<Vec<DMatrix<f64>>> =
        model.axes.iter().map(|lags| lags.iter().map(MatrixRecord::to_matrix).collect()).collect::<CliResult<_>>()?;
    let analysis_err = |e: rfcpca_core::Error| CliError::Fit { name: e.name().to_string(), message: e.to_string() };
    let mut rows = Vec::new();
    let push_angles = |rows: &mut Vec<AnalysisRow>, kind, cluster: String, other: String, lag, a: &DMatrix<f64>, b: &DMatrix<f64>| {
        principal_angles(a, b).map(|angles| {
            rows.extend(angles.into_iter().enumerate().map(|(k, value)| AnalysisRow {
                kind,
                cluster: cluster.clone(),
                other: other.clone(),
                lag,
                index: k,
                channel: String::new(),
                value,
            }))
        })
    };
    let contributions = |rows: &mut Vec<AnalysisRow>, kind, cluster: String, lag, c: &DMatrix<f64>| {
        channel_contributions(c, p).map(|contrib| {
            rows.extend(contrib.into_iter().enumerate().map(|(j, value)| AnalysisRow {
                kind,
                cluster: cluster.clone(),
                other: String::new(),
                lag,
                index: j,
                channel: names.get(j).cloned().unwrap_or_default(),
                value,
            }))
        })
    };
    for lag in 1..=fit.settings.max_lag {
        for a in 0..axes.len() {
            for b in a + 1..axes.len() {
                push_angles(&mut rows, "angle", (a + 1).to_string(), (b + 1).to_string(), lag, &axes[a][lag - 1], &axes[b][lag - 1])
                    .map_err(analysis_err)?;
            }
        }
        for (s, cluster) in axes.iter().enumerate() {
            contributions(&mut rows, "contribution", (s + 1).to_string(), lag, &cluster[lag - 1]).map_err(analysis_err)?;
        }
    }
    if matches!(model.params, VariantParams::Noise { .. }) {
        let prep = PreparedDataset::new(&data.dataset, fit.settings.max_lag).map_err(analysis_err)?;
        let u = MembershipMatrix::new(model.memberships.to_matrix()?, model.options.fuzziness).map_err(analysis_err)?;
        let noise = noise_subspaces_from(&prep, &u, model.options.variance_fraction).map_err(analysis_err)?;
        for (l, sub) in noise.iter().enumerate() {
            let lag = l + 1;
            for (s, cluster) in axes.iter().enumerate() {
                push_angles(&mut rows, "noise_angle", "noise".into(), (s + 1).to_string(), lag, sub.axes(), &cluster[l])
                    .map_err(analysis_err)?;
            }
            contributions(&mut rows, "noise_contribution", "noise".into(), lag, sub.axes()).map_err(analysis_err)?;
        }
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        io::create_dir(parent)?;
    }
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.to_string(),
                r.cluster.clone(),
                r.other.clone(),
                r.lag.to_string(),
                r.index.to_string(),
                r.channel.clone(),
                r.value.to_string(),
            ]
        })
        .collect();
    write_rows(out, &ANALYSIS_HEADER, &table)?;
    Ok(rows)
}
