//! Output directory bookkeeping: every command records content hashes of
//! its inputs and outputs and writes a `manifest.json`, so any artifact can
//! be reproduced and verified byte-for-byte. On failure, partial outputs are
//! removed.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: Option<u64>,
    parameters: serde_json::Value,
    results: serde_json::Value,
    inputs: &'a [FileRecord],
    outputs: &'a [FileRecord],
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub struct OutDir {
    dir: PathBuf,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(OutDir { dir: dir.to_path_buf(), inputs: Vec::new(), outputs: Vec::new(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// How a path is echoed into manifests: relative to the output directory
    /// when inside it, verbatim otherwise.
    pub fn rel_name(&self, path: &Path) -> String {
        path.strip_prefix(&self.dir)
            .map(|p| p.display().to_string())
            .unwrap_or_else(|_| path.display().to_string())
    }

    /// Hash an input file. Inputs living inside the output directory are
    /// recorded by their relative name, so reruns into different directories
    /// still produce identical manifests.
    pub fn record_input(&mut self, path: &Path) -> Result<()> {
        let name = path
            .strip_prefix(&self.dir)
            .map(|p| p.display().to_string())
            .unwrap_or_else(|_| path.display().to_string());
        self.inputs.push(FileRecord { name, sha256: sha256_file(path)? });
        Ok(())
    }

    /// Hash a file just written into the directory and track it for cleanup.
    pub fn record_output(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        self.outputs.push(FileRecord { name: name.to_string(), sha256: sha256_file(&path)? });
        self.written.push(path);
        Ok(())
    }

    /// Remove an intermediate that was recorded but should not be kept; its
    /// hash stays in the manifest.
    pub fn discard_file(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        if path.exists() {
            fs::remove_file(&path)?;
        }
        Ok(())
    }

    pub fn write_manifest(
        &mut self,
        command: &str,
        seed: Option<u64>,
        parameters: serde_json::Value,
        results: serde_json::Value,
    ) -> Result<()> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            parameters,
            results,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(self.path("manifest.json"), text + "\n")?;
        Ok(())
    }

    /// Delete everything written so far (called when a command fails).
    pub fn cleanup(&self) {
        for path in &self.written {
            let _ = fs::remove_file(path);
        }
        let _ = fs::remove_file(self.path("manifest.json"));
    }
}
