//! Run manifest: input hashes, config snapshot, stage timings and outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::formats::{self, FormatError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    NotConverged,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    /// Output file names relative to the output directory.
    pub outputs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub status: RunStatus,
    pub config: serde_json::Value,
    pub config_sha256: String,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputRecord>,
    pub failure: Option<StageFailure>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn hash_file(path: &Path) -> Result<String, FormatError> {
    Ok(sha256_hex(&formats::read_bytes(path)?))
}

impl RunManifest {
    pub fn new(config: serde_json::Value) -> Self {
        let config_sha256 = sha256_hex(config.to_string().as_bytes());
        Self {
            tool_version: TOOL_VERSION.into(),
            status: RunStatus::Completed,
            config,
            config_sha256,
            inputs: BTreeMap::new(),
            stages: Vec::new(),
            outputs: Vec::new(),
            failure: None,
        }
    }

    pub fn add_inputs(&mut self, files: &[PathBuf]) -> Result<(), FormatError> {
        for f in files {
            self.inputs.insert(f.display().to_string(), hash_file(f)?);
        }
        Ok(())
    }

    /// Records a finished stage and hashes its outputs under `dir`.
    pub fn add_stage(&mut self, name: &str, seconds: f64, dir: &Path, outputs: &[String]) -> Result<(), FormatError> {
        for o in outputs {
            self.outputs.push(OutputRecord { path: o.clone(), sha256: hash_file(&dir.join(o))? });
        }
        self.stages.push(StageRecord { name: name.into(), seconds, outputs: outputs.to_vec() });
        Ok(())
    }

    pub fn output_hash(&self, name: &str) -> Option<&str> {
        self.outputs.iter().find(|o| o.path == name).map(|o| o.sha256.as_str())
    }

    /// Atomic write: temporary sibling then rename.
    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        formats::write_json(path, self)
    }
}
