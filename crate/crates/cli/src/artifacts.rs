//! Output files and the per-command manifest.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Serialize)]
struct OutputEntry {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct InputEntry {
    config: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    input: InputEntry,
    overrides: &'a serde_json::Value,
    parameters: &'a serde_json::Value,
    outputs: &'a [OutputEntry],
}

/// Collects everything a command writes so the manifest can list it.
pub struct Artifacts {
    dir: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl Artifacts {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.retain(|o| o.file != name);
        self.outputs.push(OutputEntry {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Write `manifest_<command>.json` covering the files written so far.
    pub fn finish(
        self,
        command: &str,
        config_path: &Path,
        config_text: &str,
        overrides: &serde_json::Value,
        parameters: &serde_json::Value,
    ) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            input: InputEntry {
                config: config_path.display().to_string(),
                sha256: sha256_hex(config_text.as_bytes()),
            },
            overrides,
            parameters,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let name = format!("manifest_{command}.json");
        std::fs::write(self.dir.join(&name), text).with_context(|| format!("writing {name}"))?;
        Ok(())
    }
}
