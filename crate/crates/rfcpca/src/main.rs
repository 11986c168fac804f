use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rfcpca::commands::{self, FitSettings, LambdaChoice};
use rfcpca::reproduce::{self, Experiment, ReproduceSettings};
use rfcpca::CliResult;
use rfcpca_core::VariantKind;

#[derive(Debug, Parser)]
#[command(name = "rfcpca", version, about = "Robust fuzzy subspace clustering of multivariate time series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Fcpca,
    E,
    N,
    T,
}

impl From<Variant> for VariantKind {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Fcpca => VariantKind::Fcpca,
            Variant::E => VariantKind::Exponential,
            Variant::N => VariantKind::Noise,
            Variant::T => VariantKind::Trimmed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset from a JSON config: one CSV per trial plus manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one variant to a directory of trial CSVs.
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        variant: Variant,
        /// Number of clusters (searched over 2..=6 with --auto when unset).
        #[arg(short = 'S', long)]
        clusters: Option<usize>,
        /// Fuzziness m (searched with --auto when unset).
        #[arg(short = 'm', long)]
        fuzziness: Option<f64>,
        /// Trimming proportion for the trimmed variant.
        #[arg(long)]
        alpha: Option<f64>,
        /// Noise-distance multiplier, or `auto` for the elbow rule.
        #[arg(long, default_value = "auto")]
        lambda: LambdaChoice,
        /// Choose unset hyperparameters by the validity index.
        #[arg(long)]
        auto: bool,
        #[arg(long, default_value_t = 2)]
        max_lag: usize,
        #[arg(long, default_value_t = 0.95)]
        variance_fraction: f64,
        /// Random starts per grid candidate with --auto.
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a fit against the simulation manifest.
    Evaluate {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Principal angles and channel contributions of a fit, as CSV.
    Analyze {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicate a simulation table: table1 (bursts) or table4 (eye blinks).
    Reproduce {
        name: String,
        #[arg(short = 'R', long)]
        replications: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// p up to 128 and 50 replications.
        #[arg(long)]
        full: bool,
        /// Channel counts to run instead of the default set.
        #[arg(long, value_delimiter = ',')]
        channels: Option<Vec<usize>>,
        #[arg(long, default_value_t = 3)]
        restarts: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { config, out } => {
            let outcome = commands::simulate(&config, &out)?;
            println!(
                "wrote {} trials ({} contaminated) to {}",
                outcome.files.len(),
                outcome.manifest.simulation.contaminated.len(),
                out.display()
            );
        }
        Command::Fit {
            data,
            variant,
            clusters,
            fuzziness,
            alpha,
            lambda,
            auto,
            max_lag,
            variance_fraction,
            restarts,
            seed,
            out,
        } => {
            let settings = FitSettings {
                variant: variant.into(),
                auto,
                clusters,
                fuzziness,
                alpha,
                lambda,
                max_lag,
                variance_fraction,
                restarts,
                seed,
            };
            let doc = commands::fit(&data, &settings, &out)?;
            let model = doc.model()?;
            println!(
                "{}: S = {}, m = {}, objective {:.6}, {} flagged, cvi {}",
                doc.variant,
                model.selected.clusters,
                model.selected.fuzziness,
                model.objective,
                model.flagged.len(),
                model.cvi.map(|c| format!("{c:.6}")).unwrap_or_else(|| "n/a".into())
            );
        }
        Command::Evaluate { fit, manifest, out } => {
            let doc = commands::evaluate(&fit, &manifest, &out)?;
            let show = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into());
            println!(
                "{}: acc {}, ari {}, out {}, false positives {}",
                doc.variant,
                show(doc.acc),
                show(doc.ari),
                show(doc.out),
                doc.false_positives
            );
        }
        Command::Analyze { fit, data, out } => {
            let rows = commands::analyze(&fit, &data, &out)?;
            println!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Reproduce { name, replications, seed, full, channels, restarts, out } => {
            let experiment: Experiment = name.parse()?;
            let mut settings =
                if full { ReproduceSettings::full(experiment, seed) } else { ReproduceSettings::desk(experiment, seed) };
            if let Some(r) = replications {
                settings = settings.with_replications(r);
            }
            if let Some(p) = channels {
                settings = settings.with_channels(p);
            }
            settings = settings.with_restarts(restarts);
            let report = reproduce::run(&settings)?;
            reproduce::write_report(&report, &out)?;
            let (header, rows) = reproduce::summary_table(&report);
            println!("{}", header.join(","));
            for row in rows {
                println!("{}", row.join(","));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
