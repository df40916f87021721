//! Run manifest: written before any result, then updated with checksums.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub version: &'static str,
    /// Settings after merging the config file and flags.
    pub config: Settings,
    /// Values derived before the run, e.g. a calibrated noise multiplier.
    pub resolved: BTreeMap<String, serde_json::Value>,
    pub master_seed: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// File name to SHA-256 of its contents.
    pub artifacts: BTreeMap<String, String>,
}

/// Output directory bound to a manifest.
pub struct RunDir {
    manifest: RunManifest,
}

impl RunDir {
    pub fn create(manifest: RunManifest) -> anyhow::Result<Self> {
        fs::create_dir_all(&manifest.out_dir)
            .with_context(|| format!("creating {}", manifest.out_dir.display()))?;
        let dir = Self { manifest };
        dir.flush()?;
        Ok(dir)
    }

    pub fn resolve(&mut self, key: &str, value: impl Serialize) -> anyhow::Result<()> {
        self.manifest
            .resolved
            .insert(key.to_owned(), serde_json::to_value(value)?);
        self.flush()
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.manifest.out_dir.join(name)
    }

    /// Writes an artifact and records its checksum.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> anyhow::Result<PathBuf> {
        let path = self.path(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.manifest
            .artifacts
            .insert(name.to_owned(), sha256_hex(contents));
        Ok(path)
    }

    pub fn finish(self) -> anyhow::Result<()> {
        self.flush()
    }

    fn flush(&self) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        let path = self.path(MANIFEST_FILE);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
