use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    /// The effective configuration, after command-line overrides.
    pub config: serde_json::Value,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects what a command wrote so the manifest can list it.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<FileEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        fs::write(self.root.join(name), bytes)?;
        self.written.retain(|f| f.path != name);
        self.written.push(FileEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Writes the manifest itself, which is not part of its own inventory.
    pub fn finish(self, mut manifest: RunManifest) -> std::io::Result<RunManifest> {
        manifest.files = self.written;
        manifest.finished = Utc::now();
        let json = serde_json::to_vec_pretty(&manifest).map_err(std::io::Error::other)?;
        fs::write(self.root.join(MANIFEST_FILE), json)?;
        Ok(manifest)
    }
}
