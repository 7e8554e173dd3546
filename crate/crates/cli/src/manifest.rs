//! Run manifests written next to every output file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioStatus {
    pub id: String,
    pub status: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub timestamp: String,
    pub outputs: Vec<String>,
    #[serde(rename = "scenario")]
    pub scenarios: Vec<ScenarioStatus>,
}

impl RunManifest {
    pub fn new(config_text: &str, seed: u64) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: sha256_hex(config_text.as_bytes()),
            seed,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            outputs: Vec::new(),
            scenarios: Vec::new(),
        }
    }

    pub fn push(&mut self, id: &str, status: impl Into<String>) {
        self.scenarios.push(ScenarioStatus { id: id.to_string(), status: status.into() });
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| CliError::io("manifest", e))?;
        std::fs::write(path, text).map_err(|e| CliError::io(&path.display().to_string(), e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Stable 64-bit RNG key for a scenario id.
pub fn scenario_key(id: &str) -> u64 {
    let digest = Sha256::digest(id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// `out.csv` -> `out.manifest.toml`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.toml")
}
