//! Seeded replications of the two simulation tables.
//!
//! `table1` is the burst experiment (ρ = 0.20) over `T ∈ {400, 1000}`;
//! `table4` is the eye-blink experiment (ρ = 0.40) with `T_i` drawn from
//! `[400, 2000]`. Both use 10 trials per group and sweep the channel count.
//! Every replication simulates one dataset, then fits all four variants with
//! the number of clusters fixed at two and the other hyperparameters chosen
//! by the validity index. The noise variant takes its λ from the elbow rule.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use rfcpca_core::evaluation::evaluate;
use rfcpca_core::rng::derive_seed;
use rfcpca_core::robust::{default_lambda_grid, select_lambda_elbow, NoiseConfig};
use rfcpca_core::selection::{grid_search, SearchGrid};
use rfcpca_core::simgen::{simulate, BlinkConfig, BurstConfig, ContaminationConfig, LengthSpec, SimConfig};
use rfcpca_core::{FitOptions, PreparedDataset, VariantKind};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io::{self, write_json, write_rows};
use crate::provenance::{Provenance, SCHEMA_VERSION};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPLICATIONS_FILE: &str = "replications.csv";
pub const REPORT_FILE: &str = "reproduce.json";

const N_PER_GROUP: usize = 10;
const MAX_LAG: usize = 2;
const CLUSTERS: usize = 2;
const ELBOW_FUZZINESS: f64 = 2.0;
const ELBOW_GRID: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Table1,
    Table4,
}

impl FromStr for Experiment {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "table1" => Ok(Experiment::Table1),
            "table4" => Ok(Experiment::Table4),
            other => Err(CliError::Usage(format!("unknown experiment {other:?}; expected table1 or table4"))),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Table1 => "table1",
            Experiment::Table4 => "table4",
        })
    }
}

impl Experiment {
    pub fn lengths(self) -> Vec<LengthSpec> {
        match self {
            Experiment::Table1 => vec![LengthSpec::Fixed(400), LengthSpec::Fixed(1000)],
            Experiment::Table4 => vec![LengthSpec::Range(400, 2000)],
        }
    }

    pub fn contamination(self) -> ContaminationConfig {
        match self {
            Experiment::Table1 => ContaminationConfig::Burst(BurstConfig::default()),
            Experiment::Table4 => ContaminationConfig::Eyeblink(BlinkConfig::default()),
        }
    }
}

pub fn length_label(spec: LengthSpec) -> String {
    match spec {
        LengthSpec::Fixed(t) => t.to_string(),
        LengthSpec::Range(lo, hi) => format!("{lo}-{hi}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceSettings {
    pub experiment: Experiment,
    pub replications: usize,
    pub seed: u64,
    pub channels: Vec<usize>,
    pub lengths: Vec<LengthSpec>,
    pub restarts: usize,
    pub full: bool,
}

impl ReproduceSettings {
    /// Desk scale: `p ∈ {32, 64}` and 10 replications.
    pub fn desk(experiment: Experiment, seed: u64) -> Self {
        Self {
            experiment,
            replications: 10,
            seed,
            channels: vec![32, 64],
            lengths: experiment.lengths(),
            restarts: 3,
            full: false,
        }
    }

    /// Full scale: `p ∈ {32, 64, 128}` and 50 replications.
    pub fn full(experiment: Experiment, seed: u64) -> Self {
        Self { replications: 50, channels: vec![32, 64, 128], full: true, ..Self::desk(experiment, seed) }
    }

    pub fn with_replications(mut self, r: usize) -> Self {
        self.replications = r;
        self
    }

    pub fn with_channels(mut self, channels: Vec<usize>) -> Self {
        self.channels = channels;
        self
    }

    pub fn with_lengths(mut self, lengths: Vec<LengthSpec>) -> Self {
        self.lengths = lengths;
        self
    }

    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts;
        self
    }

    fn validate(&self) -> CliResult<()> {
        if self.replications == 0 || self.restarts == 0 || self.channels.is_empty() || self.lengths.is_empty() {
            return Err(CliError::Usage("replications, restarts, channels and lengths must be non-empty".into()));
        }
        Ok(())
    }

    /// Replication `r` uses the same dataset seed in every `(T, p)` cell.
    pub fn replication_seed(&self, r: usize) -> u64 {
        derive_seed(self.seed, &[r as u64])
    }
}

/// Scores of one variant on one replicated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub length: String,
    pub channels: usize,
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    /// Rand index on the objects not flagged; 0 when every object is flagged.
    pub acc: f64,
    pub ari: Option<f64>,
    /// Fraction of contaminated trials flagged.
    pub out: f64,
    pub alpha: Option<f64>,
    pub fuzziness: Option<f64>,
    pub lambda: Option<f64>,
    pub flagged: usize,
    pub false_positives: usize,
    pub error: Option<String>,
}

/// Mean over replications for one `(method, T, p)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: String,
    pub length: String,
    pub channels: usize,
    pub replications: usize,
    pub failures: usize,
    pub acc: f64,
    pub out: f64,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub settings: ReproduceSettings,
    pub summary: Vec<SummaryCell>,
    pub records: Vec<ReplicationRecord>,
}

impl ReproduceReport {
    pub fn cell(&self, method: VariantKind, length: &str, channels: usize) -> Option<&SummaryCell> {
        self.summary.iter().find(|c| c.method == method.label() && c.length == length && c.channels == channels)
    }
}

fn failed(length: &str, channels: usize, replication: usize, seed: u64, method: VariantKind, error: String) -> ReplicationRecord {
    ReplicationRecord {
        length: length.to_string(),
        channels,
        replication,
        seed,
        method: method.label().to_string(),
        acc: 0.0,
        ari: None,
        out: 0.0,
        alpha: None,
        fuzziness: None,
        lambda: None,
        flagged: 0,
        false_positives: 0,
        error: Some(error),
    }
}

/// All four variants on one simulated dataset.
pub fn run_replication(
    experiment: Experiment,
    length: LengthSpec,
    channels: usize,
    replication: usize,
    seed: u64,
    restarts: usize,
) -> Vec<ReplicationRecord> {
    let label = length_label(length);
    let config = SimConfig::new(N_PER_GROUP, channels, length, seed);
    let prepared = simulate(&config, &experiment.contamination(), derive_seed(seed, &[1]))
        .and_then(|(ds, manifest)| PreparedDataset::new(&ds, MAX_LAG).map(|prep| (prep, manifest)));
    let (prep, manifest) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return VariantKind::ALL.iter().map(|&v| failed(&label, channels, replication, seed, v, e.name().to_string())).collect();
        }
    };
    let fit_seed = derive_seed(seed, &[2]);
    VariantKind::ALL
        .iter()
        .map(|&variant| {
            let outcome = (|| {
                let mut grid = SearchGrid::new(variant).with_clusters(vec![CLUSTERS]);
                let mut lambda = None;
                if variant == VariantKind::Noise {
                    let opts = FitOptions::new(CLUSTERS, ELBOW_FUZZINESS).with_seed(fit_seed);
                    let elbow = select_lambda_elbow(&prep, &opts, &default_lambda_grid(ELBOW_GRID), &NoiseConfig::new(1.0))?;
                    lambda = Some(elbow.lambda);
                    grid = grid.with_noise(NoiseConfig::new(elbow.lambda));
                }
                let (fit, report) = grid_search(&prep, &grid, fit_seed, restarts)?;
                let eval = evaluate(&fit, &manifest.labels, &manifest.contaminated)?;
                let winner = report.winner().candidate;
                Ok::<_, rfcpca_core::Error>(ReplicationRecord {
                    length: label.clone(),
                    channels,
                    replication,
                    seed,
                    method: variant.label().to_string(),
                    acc: eval.acc_rand.unwrap_or(0.0),
                    ari: eval.acc_adjusted_rand,
                    out: eval.outlier_recall.unwrap_or(0.0),
                    alpha: winner.alpha,
                    fuzziness: Some(winner.fuzziness),
                    lambda,
                    flagged: eval.flagged.len(),
                    false_positives: eval.false_positives,
                    error: None,
                })
            })();
            outcome.unwrap_or_else(|e| failed(&label, channels, replication, seed, variant, e.name().to_string()))
        })
        .collect()
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Cells in table order: method, then `T`, then `p`.
pub fn summarise(settings: &ReproduceSettings, records: &[ReplicationRecord]) -> Vec<SummaryCell> {
    let mut cells = Vec::new();
    for variant in VariantKind::ALL {
        for &length in &settings.lengths {
            let label = length_label(length);
            for &p in &settings.channels {
                let cell: Vec<&ReplicationRecord> =
                    records.iter().filter(|r| r.method == variant.label() && r.length == label && r.channels == p).collect();
                cells.push(SummaryCell {
                    method: variant.label().to_string(),
                    length: label.clone(),
                    channels: p,
                    replications: cell.len(),
                    failures: cell.iter().filter(|r| r.error.is_some()).count(),
                    acc: mean(cell.iter().map(|r| r.acc)).unwrap_or(0.0),
                    out: mean(cell.iter().map(|r| r.out)).unwrap_or(0.0),
                    alpha: mean(cell.iter().filter_map(|r| r.alpha)),
                });
            }
        }
    }
    cells
}

/// Runs every `(T, p, replication)` job in parallel; records come back in
/// job order, so the output does not depend on scheduling.
pub fn run(settings: &ReproduceSettings) -> CliResult<ReproduceReport> {
    settings.validate()?;
    let jobs: Vec<(LengthSpec, usize, usize)> = settings
        .lengths
        .iter()
        .flat_map(|&t| settings.channels.iter().flat_map(move |&p| (0..settings.replications).map(move |r| (t, p, r))))
        .collect();
    let records: Vec<ReplicationRecord> = jobs
        .par_iter()
        .map(|&(t, p, r)| run_replication(settings.experiment, t, p, r, settings.replication_seed(r), settings.restarts))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    Ok(ReproduceReport {
        schema_version: SCHEMA_VERSION,
        provenance: Provenance::new(settings, None, settings.seed),
        summary: summarise(settings, &records),
        settings: settings.clone(),
        records,
    })
}

fn cell_value(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

/// One row per method and `T`, with an `acc`/`out`/`alpha` column block per
/// channel count. `alpha` is empty for methods that do not trim.
pub fn summary_table(report: &ReproduceReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["method".to_string(), "T".to_string()];
    for p in &report.settings.channels {
        header.extend([format!("acc_p{p}"), format!("out_p{p}"), format!("alpha_p{p}")]);
    }
    let mut rows = Vec::new();
    for variant in VariantKind::ALL {
        for &length in &report.settings.lengths {
            let label = length_label(length);
            let mut row = vec![variant.label().to_string(), label.clone()];
            for &p in &report.settings.channels {
                let cell = report.cell(variant, &label, p);
                row.push(cell_value(cell.map(|c| c.acc)));
                row.push(cell_value(cell.map(|c| c.out)));
                row.push(cell_value(cell.and_then(|c| c.alpha)));
            }
            rows.push(row);
        }
    }
    (header, rows)
}

/// Writes `summary.csv`, `replications.csv` and `reproduce.json`.
pub fn write_report(report: &ReproduceReport, out_dir: &Path) -> CliResult<()> {
    io::create_dir(out_dir)?;
    let (header, rows) = summary_table(report);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows(&out_dir.join(SUMMARY_FILE), &header, &rows)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let detail: Vec<Vec<String>> = report
        .records
        .iter()
        .map(|r| {
            vec![
                r.method.clone(),
                r.length.clone(),
                r.channels.to_string(),
                r.replication.to_string(),
                r.seed.to_string(),
                r.acc.to_string(),
                opt(r.ari),
                r.out.to_string(),
                opt(r.alpha),
                opt(r.fuzziness),
                opt(r.lambda),
                r.flagged.to_string(),
                r.false_positives.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(
        &out_dir.join(REPLICATIONS_FILE),
        &[
            "method",
            "T",
            "p",
            "replication",
            "seed",
            "acc",
            "ari",
            "out",
            "alpha",
            "fuzziness",
            "lambda",
            "flagged",
            "false_positives",
            "error",
        ],
        &detail,
    )?;
    write_json(&out_dir.join(REPORT_FILE), report)
}
