use std::path::{Path, PathBuf};

use lbbp_core::LbbpConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path, label: String) -> CliResult<Self> {
        let data = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            path: label,
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    /// The run failed; `outputs` lists whatever was written before.
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub status: RunStatus,
    pub error: Option<String>,
    /// Cold or warm start.
    pub start: Option<String>,
    pub config: Option<LbbpConfig>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
    /// Seconds per stage.
    pub timings: serde_json::Value,
}

/// Collects outputs as they are written so a failed run can still report them.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, data: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.root.join(name);
        std::fs::write(&path, data).map_err(|e| CliError::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn digests(&self) -> CliResult<Vec<FileDigest>> {
        self.written
            .iter()
            .map(|name| FileDigest::of(&self.root.join(name), name.clone()))
            .collect()
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> CliResult<()> {
        let path = self.root.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
