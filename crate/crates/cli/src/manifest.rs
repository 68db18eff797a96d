//! Run manifest: a reproducibility audit trail tying every artifact to the
//! config and inputs that produced it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

impl Artifact {
    /// Hash a file's bytes; `path` is recorded as given (usually relative
    /// to the output directory).
    pub fn from_file(recorded_path: &str, file: &Path) -> std::io::Result<Artifact> {
        let bytes = std::fs::read(file)?;
        Ok(Artifact { path: recorded_path.to_string(), sha256: hex::encode(Sha256::digest(&bytes)) })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stages: Vec<StageRecord>,
    /// Per-file failures that did not abort the run (e.g. corrupt motions).
    pub errors: Vec<String>,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        RunManifest {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            started_unix: unix_now(),
            finished_unix: 0,
            stages: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn finish_and_write(mut self, path: &Path) -> std::io::Result<()> {
        self.finished_unix = unix_now();
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        std::fs::write(path, json)
    }
}
