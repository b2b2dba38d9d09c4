//! Provenance records written next to every artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const PROVENANCE_FILE: &str = "provenance.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub inputs: Vec<InputHash>,
    /// Free-form facts about the run (counts, warnings, log file names).
    pub notes: BTreeMap<String, serde_json::Value>,
}

impl Provenance {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            inputs: Vec::new(),
            notes: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self, CliError> {
        self.inputs.push(InputHash { path: path.to_path_buf(), sha256: hash_path(path)? });
        Ok(self)
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.notes.insert(key.to_string(), serde_json::to_value(value).expect("note serializes"));
        self
    }

    /// Writes `dir/provenance.json` for a directory artifact, `<file>.provenance.json` otherwise.
    pub fn write_for(&self, artifact: &Path) -> Result<PathBuf, CliError> {
        let target = provenance_path(artifact);
        let text = serde_json::to_string_pretty(self).expect("provenance serializes");
        fs::write(&target, text + "\n").map_err(|e| CliError::io(&target, e))?;
        Ok(target)
    }
}

pub fn provenance_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        artifact.join(PROVENANCE_FILE)
    } else {
        let mut name = artifact.file_name().unwrap_or_default().to_os_string();
        name.push(".provenance.json");
        artifact.with_file_name(name)
    }
}

fn is_provenance(name: &str) -> bool {
    name == PROVENANCE_FILE || name.ends_with(".provenance.json")
}

/// SHA-256 of a file, or of the sorted `(relative name, file hash)` list of a
/// directory tree. Provenance files are skipped so hashes describe content only.
pub fn hash_path(path: &Path) -> Result<String, CliError> {
    if path.is_file() {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        return Ok(hex::encode(Sha256::digest(&bytes)));
    }
    let mut files = Vec::new();
    collect(path, path, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for (name, digest) in files {
        h.update(name.as_bytes());
        h.update([0]);
        h.update(digest.as_bytes());
        h.update([b'\n']);
    }
    Ok(hex::encode(h.finalize()))
}

fn collect(root: &Path, dir: &Path, out: &mut Vec<(String, String)>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        let name = p.strip_prefix(root).expect("inside root").to_string_lossy().replace('\\', "/");
        if p.is_dir() {
            collect(root, &p, out)?;
        } else if !is_provenance(name.rsplit('/').next().unwrap_or_default()) {
            out.push((name, hash_path(&p)?));
        }
    }
    Ok(())
}
