use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sha256: String,
    pub bytes: u64,
}

/// Every artifact of a run, keyed by path relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub config_sha256: String,
    pub outputs: BTreeMap<String, ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let io = |e: std::io::Error| PipelineError::Output {
        path: path.to_path_buf(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// Output directory plus the manifest being accumulated.
pub struct Artifacts {
    root: PathBuf,
    manifest: Manifest,
}

impl Artifacts {
    pub fn new(root: PathBuf, subcommand: &str, config_sha256: String) -> Self {
        Self {
            root,
            manifest: Manifest {
                subcommand: subcommand.to_string(),
                config_sha256,
                outputs: BTreeMap::new(),
            },
        }
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        write_atomic(&self.root.join(relative), bytes)?;
        log::debug!("stage=output path={relative} bytes={}", bytes.len());
        self.manifest.outputs.insert(
            relative.to_string(),
            ManifestEntry {
                sha256: sha256_hex(bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    pub fn write_json(&mut self, relative: &str, value: &impl Serialize) -> Result<(), PipelineError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Numerical(e.to_string()))?;
        text.push('\n');
        self.write(relative, text.as_bytes())
    }

    pub fn finish(self) -> Result<Manifest, PipelineError> {
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.root.join(MANIFEST_NAME), text.as_bytes())?;
        Ok(self.manifest)
    }
}
