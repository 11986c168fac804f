//! Trial CSV files, JSON documents and the dataset digest.
//!
//! A trial is one CSV file: a header row of channel names, then one row per
//! time point. A dataset is every `*.csv` file directly inside a directory,
//! taken in lexicographic file-name order. Simulated and recorded data share
//! this layout, so real trials are read the same way.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rfcpca_core::MtsDataset;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub fn channel_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("ch{j}")).collect()
}

pub fn trial_file_name(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(3);
    format!("trial_{i:0width$}.csv")
}

/// Values are written with Rust's shortest round-trip formatting, so reading
/// the file back gives the same bits.
pub fn write_trial(path: &Path, x: &DMatrix<f64>, names: &[String]) -> CliResult<()> {
    if names.len() != x.ncols() {
        return Err(CliError::Usage(format!("{} channel names for {} columns", names.len(), x.ncols())));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(names).map_err(|e| CliError::io(path, e))?;
    let mut row = Vec::with_capacity(x.ncols());
    for t in 0..x.nrows() {
        row.clear();
        row.extend((0..x.ncols()).map(|j| x[(t, j)].to_string()));
        w.write_record(&row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads one trial; returns the channel names and the `T × p` matrix.
pub fn read_trial(path: &Path) -> CliResult<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::io(path, e))?;
    let names: Vec<String> = r.headers().map_err(|e| CliError::io(path, e))?.iter().map(str::to_string).collect();
    let p = names.len();
    let mut values = Vec::new();
    for (t, record) in r.records().enumerate() {
        let record = record.map_err(|e| CliError::io(path, e))?;
        if record.len() != p {
            return Err(CliError::io(path, format!("row {} has {} fields, header has {p}", t + 1, record.len())));
        }
        for field in &record {
            let v: f64 = field.parse().map_err(|_| CliError::io(path, format!("row {}: not a number: {field:?}", t + 1)))?;
            values.push(v);
        }
    }
    let rows = values.len() / p.max(1);
    Ok((names, DMatrix::from_row_slice(rows, p, &values)))
}

/// Sorted `*.csv` files directly inside `dir`.
pub fn trial_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// A directory of trials: simulated output or recorded data exported as CSV.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: MtsDataset,
    pub files: Vec<PathBuf>,
    pub channel_names: Vec<String>,
    pub hash: String,
}

pub fn load_dataset(dir: &Path) -> CliResult<LoadedDataset> {
    let files = trial_files(dir)?;
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .csv trials in {}", dir.display())));
    }
    let mut series = Vec::with_capacity(files.len());
    let mut channel_names: Option<Vec<String>> = None;
    for f in &files {
        let (names, x) = read_trial(f)?;
        match &channel_names {
            None => channel_names = Some(names),
            Some(first) if *first != names => {
                return Err(CliError::io(f, format!("channels {names:?} differ from {first:?}")));
            }
            Some(_) => {}
        }
        series.push(x);
    }
    let dataset = MtsDataset::new(series).map_err(|e| CliError::io(dir, e))?;
    Ok(LoadedDataset { dataset, hash: dataset_hash(&files)?, files, channel_names: channel_names.unwrap_or_default() })
}

/// SHA-256 over the sorted trial files: for each, its file name, a zero byte,
/// its length as a little-endian u64, and its bytes.
pub fn dataset_hash(files: &[PathBuf]) -> CliResult<String> {
    let mut sorted: Vec<&PathBuf> = files.iter().collect();
    sorted.sort();
    let mut h = Sha256::new();
    for f in sorted {
        let bytes = fs::read(f).map_err(|e| CliError::io(f, e))?;
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        h.update(name.as_bytes());
        h.update([0u8]);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::io(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// A missing file is a usage error; a malformed one is a config error.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("{} does not exist", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}
