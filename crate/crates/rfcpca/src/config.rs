//! The simulation config: one JSON document per experiment.
//!
//! ```json
//! {
//!   "n_per_group": 10,
//!   "channels": 32,
//!   "length": { "fixed": 400 },
//!   "seed": 1,
//!   "contamination": { "type": "burst", "rho": 0.2 }
//! }
//! ```
//!
//! `length` is `{"fixed": T}` or `{"range": [lo, hi]}`. `contamination` is
//! `{"type": "none"}`, `{"type": "burst", ...}` or `{"type": "eyeblink", ...}`;
//! omitted artifact fields take their defaults. `contamination_seed`,
//! `sampling_rate`, `bands`, `filter` and `mixing` are optional. Unknown keys
//! are rejected at every level.

use std::path::Path;

use rfcpca_core::rng::derive_seed;
use rfcpca_core::simgen::{BandSpec, ContaminationConfig, FilterSpec, LengthSpec, MixingConfig, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

const CONTAMINATION_STREAM: u64 = 0xC0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub n_per_group: usize,
    pub channels: usize,
    pub length: LengthSpec,
    pub seed: u64,
    #[serde(default = "no_contamination")]
    pub contamination: ContaminationConfig,
    #[serde(default)]
    pub contamination_seed: Option<u64>,
    #[serde(default)]
    pub sampling_rate: Option<f64>,
    #[serde(default)]
    pub bands: Option<Vec<BandSpec>>,
    #[serde(default)]
    pub filter: Option<FilterSpec>,
    #[serde(default)]
    pub mixing: Option<MixingConfig>,
}

fn no_contamination() -> ContaminationConfig {
    ContaminationConfig::None
}

/// Every setting the generator sees, defaults filled in. Its JSON is what the
/// config hash covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSimulation {
    pub simulation: SimConfig,
    pub contamination: ContaminationConfig,
    pub contamination_seed: u64,
}

impl SimulateConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self) -> ResolvedSimulation {
        let mut simulation = SimConfig::new(self.n_per_group, self.channels, self.length, self.seed);
        if let Some(fs) = self.sampling_rate {
            simulation.sampling_rate = fs;
        }
        if let Some(bands) = &self.bands {
            simulation.bands = bands.clone();
        }
        if let Some(filter) = self.filter {
            simulation.filter = filter;
        }
        if let Some(mixing) = &self.mixing {
            simulation.mixing = mixing.clone();
        }
        ResolvedSimulation {
            simulation,
            contamination: self.contamination.clone(),
            contamination_seed: self.contamination_seed.unwrap_or_else(|| derive_seed(self.seed, &[CONTAMINATION_STREAM])),
        }
    }
}
