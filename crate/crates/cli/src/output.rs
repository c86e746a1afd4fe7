//! Artifact writing confined to the configured output directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// Writes files atomically (temporary file, then rename) and records each
/// file's digest for the manifest.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<(String, String)>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating output directory {}", root.display()))?;
        Ok(Self { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
            bail!("refusing to write '{name}' outside the output directory");
        }
        let tmp = self.root.join(format!(".{name}.tmp"));
        let dest = self.root.join(name);
        fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
        fs::rename(&tmp, &dest).with_context(|| format!("renaming into {}", dest.display()))?;
        self.written.retain(|(n, _)| n != name);
        self.written.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    /// Runs a core CSV writer into memory and stores the result.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> gaitlr_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf).with_context(|| format!("formatting {name}"))?;
        self.write(name, &buf)
    }

    pub fn outputs(&self) -> Value {
        Value::Array(self.written.iter().map(|(n, h)| json!({ "file": n, "sha256": h })).collect())
    }
}
