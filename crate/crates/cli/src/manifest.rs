//! Run manifest: what each step produced, with checksums and timings.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use flextm_core::ModelTag;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: String,
    pub ok: bool,
    pub wall_seconds: f64,
    pub artifacts: Vec<ArtifactRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelTag>,
    pub output_dir: PathBuf,
    pub steps: Vec<StepRecord>,
    pub complete: bool,
}

impl RunManifest {
    pub fn new(config_text: &str, output_dir: &Path) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            model: None,
            output_dir: output_dir.to_path_buf(),
            steps: Vec::new(),
            complete: false,
        }
    }

    /// A manifest with no steps, as read by `report` for an empty run.
    pub fn empty(output_dir: &Path) -> Self {
        Self::new("", output_dir)
    }

    /// Latest successful record of an artifact with this file name.
    pub fn artifact(&self, name: &str) -> Option<&ArtifactRecord> {
        self.steps
            .iter()
            .rev()
            .filter(|s| s.ok)
            .flat_map(|s| s.artifacts.iter())
            .find(|a| a.path == name)
    }

    pub fn artifact_path(&self, name: &str) -> Option<PathBuf> {
        self.artifact(name).map(|a| self.output_dir.join(&a.path))
    }

    pub fn all_ok(&self) -> bool {
        self.steps.iter().all(|s| s.ok)
    }

    /// Re-hashes every recorded artifact; returns the paths that differ.
    pub fn verify(&self) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in self.steps.iter().flat_map(|s| s.artifacts.iter()) {
            let rec = record(&self.output_dir, &a.path)?;
            if rec.sha256 != a.sha256 {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)? + "\n";
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Loads a manifest; its output directory becomes the manifest's own
    /// directory so a moved run still resolves its artifacts.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut m: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if let Some(dir) = path.parent() {
            m.output_dir = dir.to_path_buf();
        }
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Checksum record for `dir/name`.
pub fn record(dir: &Path, name: &str) -> Result<ArtifactRecord> {
    let path = dir.join(name);
    let bytes = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ArtifactRecord {
        path: name.to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644))?;
    }
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
