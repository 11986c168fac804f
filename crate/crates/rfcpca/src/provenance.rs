use serde::{Deserialize, Serialize};

use crate::io::sha256_hex;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA_VERSION: u32 = 1;

/// Carried by every JSON document the tool writes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub dataset_hash: Option<String>,
    pub seed: u64,
}

impl Provenance {
    pub fn new<C: Serialize>(config: &C, dataset_hash: Option<String>, seed: u64) -> Self {
        Self { tool: TOOL.to_string(), version: VERSION.to_string(), config_hash: config_hash(config), dataset_hash, seed }
    }
}

/// SHA-256 of the compact JSON of the resolved settings.
pub fn config_hash<C: Serialize>(config: &C) -> String {
    let bytes = serde_json::to_vec(config).expect("settings serialise to JSON");
    sha256_hex(&bytes)
}
