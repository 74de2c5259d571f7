//! Run manifests: every command writes `<out>.manifest.json` next to its
//! artifact, freezing the command line, the merged configuration, the seed,
//! and SHA-256 hashes of the outputs. Re-running a command with the inputs
//! recorded in a manifest reproduces the artifact bytes exactly.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::output::write_atomic;

#[derive(Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub version: String,
    pub seed: u64,
    pub jobs: usize,
    pub config: serde_json::Value,
    pub artifacts: Vec<Artifact>,
    pub wall_clock_seconds: f64,
}

pub struct ManifestBuilder {
    start: Instant,
    seed: u64,
    jobs: usize,
    config: serde_json::Value,
    artifacts: Vec<Artifact>,
}

impl ManifestBuilder {
    pub fn new(seed: u64, jobs: usize, config: serde_json::Value) -> Self {
        Self {
            start: Instant::now(),
            seed,
            jobs,
            config,
            artifacts: Vec::new(),
        }
    }

    /// Writes one artifact atomically and records its hash.
    pub fn write_artifact(&mut self, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(path, bytes)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest = hasher.finalize();
        let sha256 = digest.iter().map(|b| format!("{b:02x}")).collect();
        self.artifacts.push(Artifact {
            path: path.display().to_string(),
            sha256,
            bytes: bytes.len(),
        });
        Ok(())
    }

    /// Writes the manifest next to the primary artifact.
    pub fn finish(self, primary: &Path) -> std::io::Result<()> {
        let manifest = RunManifest {
            command: std::env::args().collect(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            jobs: self.jobs,
            config: self.config,
            artifacts: self.artifacts,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = primary.with_extension(match primary.extension() {
            Some(ext) => format!("{}.manifest.json", ext.to_string_lossy()),
            None => "manifest.json".to_string(),
        });
        write_atomic(&path, text.as_bytes())
    }
}
