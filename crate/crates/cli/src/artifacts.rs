//! Output-directory management: atomic writes (temp then rename), a
//! machine-readable run manifest with content digests, and `.partial`
//! renaming of whatever was written when a later stage fails.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

pub struct ArtifactSink {
    dir: PathBuf,
    written: Vec<(String, usize, String)>, // (name, bytes, sha256)
}

impl ArtifactSink {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Atomically write one artifact: the bytes land in a temp file that is
    /// renamed over the final name.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!("{name}.tmp"));
        std::fs::write(&tmp, bytes).with_context(|| format!("write {}", tmp.display()))?;
        std::fs::rename(&tmp, &path).with_context(|| format!("rename to {}", path.display()))?;
        let digest = Sha256::digest(bytes);
        self.written.push((name.to_string(), bytes.len(), format!("{digest:x}")));
        Ok(path)
    }

    /// Rename everything written so far to `<name>.partial`; called when a
    /// later stage fails so the debris is clearly marked but retained.
    pub fn mark_partial(&self) {
        for (name, _, _) in &self.written {
            let from = self.dir.join(name);
            let to = self.dir.join(format!("{name}.partial"));
            let _ = std::fs::rename(&from, &to);
        }
    }

    /// Write the run manifest (deterministic for identical runs: no
    /// timestamps, artifacts sorted by name).
    pub fn finish(mut self, mode: &str, seed: u64, inputs: &[String], notes: &[String]) -> Result<()> {
        #[derive(Serialize)]
        struct ArtifactEntry<'a> {
            path: &'a str,
            bytes: usize,
            sha256: &'a str,
        }
        #[derive(Serialize)]
        struct Manifest<'a> {
            mode: &'a str,
            seed: u64,
            inputs: &'a [String],
            notes: &'a [String],
            artifacts: Vec<ArtifactEntry<'a>>,
        }
        self.written.sort_by(|a, b| a.0.cmp(&b.0));
        let manifest = Manifest {
            mode,
            seed,
            inputs,
            notes,
            artifacts: self
                .written
                .iter()
                .map(|(name, bytes, sha)| ArtifactEntry { path: name, bytes: *bytes, sha256: sha })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&manifest)?;
        let path = self.dir.join("manifest.json");
        let tmp = self.dir.join("manifest.json.tmp");
        std::fs::write(&tmp, json.as_bytes())?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}
