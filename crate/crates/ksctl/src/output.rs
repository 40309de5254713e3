//! Run directories, artifacts and manifests.
//!
//! Artifacts are written as soon as they are produced so a failing task still
//! leaves its partial outputs behind. `manifest.json` holds only
//! deterministic content; wall-clock data goes to `timings.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory of one run.
#[derive(Debug)]
pub struct RunDir {
    pub path: PathBuf,
    artifacts: BTreeMap<String, String>,
}

impl RunDir {
    /// Creates `root/run-<UTC timestamp>-<hash prefix>`, suffixed on collision.
    pub fn create(root: &Path, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        let base = format!("run-{stamp}-{}", &config_hash[..12]);
        let mut path = root.join(&base);
        let mut n = 1;
        loop {
            match fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = root.join(format!("{base}-{n}"));
                    n += 1;
                }
                Err(e) => return Err(e).with_context(|| format!("creating {}", path.display())),
            }
        }
        Ok(RunDir { path, artifacts: BTreeMap::new() })
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let p = self.path.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Artifact name to sha256.
    pub fn artifacts(&self) -> &BTreeMap<String, String> {
        &self.artifacts
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Versions {
    pub ksctl: &'static str,
    pub ks_core: &'static str,
    pub manifest_schema: u32,
}

impl Versions {
    pub fn current() -> Self {
        Versions { ksctl: env!("CARGO_PKG_VERSION"), ks_core: ks_core::VERSION, manifest_schema: MANIFEST_SCHEMA }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorInfo {
    pub exit_code: i32,
    pub kind: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub task: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: String,
    pub inputs: Value,
    pub versions: Versions,
    pub status: &'static str,
    pub verdicts: Value,
    pub results: Value,
    pub exit_code: i32,
    pub error: Option<ErrorInfo>,
    pub artifacts: BTreeMap<String, String>,
}
