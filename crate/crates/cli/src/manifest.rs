use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Effective configuration after flag overrides.
    pub config: serde_json::Value,
    pub seed: u64,
    /// SHA-256 of the input data file, when there is one.
    pub data_sha256: Option<String>,
    pub workers: usize,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<String>,
    /// Command-specific results such as acceptance rates.
    pub details: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64, data: Option<&[u8]>, workers: usize) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            seed,
            data_sha256: data.map(sha256_hex),
            workers,
            wall_clock_seconds: 0.0,
            outputs: Vec::new(),
            details: serde_json::Value::Null,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
