//! Artifact manifest.
//!
//! Every command records what it wrote into `manifest.json` next to the
//! artifacts: path, size and SHA-256 per file, plus any per-target failures.
//! The manifest is the only output that contains a timestamp, so re-running
//! a command leaves every other file byte-identical.

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    /// What was being produced, e.g. `backtest stochastic k=30`.
    pub target: String,
    pub error: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub created_utc: String,
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
}

impl Manifest {
    pub fn new(command: impl Into<String>) -> Self {
        Self {
            command: command.into(),
            created_utc: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            artifacts: Vec::new(),
            failures: Vec::new(),
        }
    }

    /// Hash a file that was just written and record it, keyed relative to
    /// `root` (the directory the manifest will live in).
    pub fn record(&mut self, root: &Path, path: &Path) -> anyhow::Result<()> {
        let bytes =
            std::fs::read(path).with_context(|| format!("hashing artifact {}", path.display()))?;
        let rel = path.strip_prefix(root).unwrap_or(path);
        self.artifacts.push(Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn record_failure(&mut self, target: impl Into<String>, error: impl std::fmt::Display) {
        self.failures.push(Failure {
            target: target.into(),
            error: format!("{error:#}"),
        });
    }

    /// Sort artifacts by path and write `manifest.json` under `root`.
    pub fn write(mut self, root: &Path) -> anyhow::Result<PathBuf> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let path = root.join("manifest.json");
        let json = serde_json::to_string_pretty(&self).context("serializing manifest")?;
        crate::write_atomic(&path, &json)?;
        Ok(path)
    }
}
