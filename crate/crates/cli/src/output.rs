//! Atomic output files with content digests.
//!
//! Every artifact is written to a temporary sibling and renamed into place,
//! so a crash never leaves a half-written file, and its SHA-256 is recorded
//! so the manifest can vouch for exactly what was produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qtherm::error::{Error, Result};
use sha2::{Digest, Sha256};

/// Hex SHA-256 of a byte buffer.
pub fn digest_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut hex = String::with_capacity(out.len() * 2);
    for b in out {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

/// Writes `bytes` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| Error::config(format!("{} has no parent directory", path.display())))?;
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::config(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects artifacts for one output directory and remembers their digests.
pub struct OutputWriter {
    dir: PathBuf,
    digests: BTreeMap<String, String>,
}

impl OutputWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            digests: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Writes one named artifact atomically and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.digests.insert(name.to_string(), digest_hex(bytes));
        Ok(())
    }

    /// Builds an artifact in memory with `fill`, then writes it.
    pub fn write_with<F>(&mut self, name: &str, fill: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        self.write(name, &buf)
    }

    /// Digests of everything written so far, keyed by file name.
    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    pub fn into_digests(self) -> BTreeMap<String, String> {
        self.digests
    }
}
