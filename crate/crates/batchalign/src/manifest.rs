//! Run manifests: content hashes of every artifact a command reads or
//! writes, the config echo, tool version, and wall-clock timings.
//!
//! Manifests are reviewer metadata, written atomically at the end of each
//! command. Artifact hashes are recomputable, so a manifest doubles as a
//! tamper check.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Resolved configuration, one entry per key.
    pub config: BTreeMap<String, String>,
    /// Artifact path -> sha256 hex, for inputs and outputs alike.
    pub artifacts: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: BTreeMap<String, String>) -> (Self, Instant) {
        (
            RunManifest {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                config,
                artifacts: BTreeMap::new(),
                wall_clock_seconds: 0.0,
            },
            Instant::now(),
        )
    }

    /// Hashes `path` and records it under its file name.
    pub fn record_artifact(&mut self, path: &Path) -> std::io::Result<()> {
        let digest = hash_file(path)?;
        self.artifacts
            .insert(path.file_name().unwrap().to_string_lossy().into_owned(), digest);
        Ok(())
    }

    pub fn finish(mut self, started: Instant, path: &Path) -> std::io::Result<()> {
        self.wall_clock_seconds = started.elapsed().as_secs_f64();
        let bytes = serde_json::to_vec_pretty(&self).expect("manifest serializes");
        write_atomic(path, &bytes)
    }
}

/// Verifies that every artifact listed in the manifest still hashes to the
/// recorded value. Returns the paths that changed.
pub fn verify_artifacts(manifest: &RunManifest, dir: &Path) -> std::io::Result<Vec<String>> {
    let mut stale = Vec::new();
    for (name, recorded) in &manifest.artifacts {
        let current = hash_file(&dir.join(name))?;
        if &current != recorded {
            stale.push(name.clone());
        }
    }
    Ok(stale)
}

pub fn hash_file(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hash_bytes(&bytes))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Write-temp-then-rename so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
