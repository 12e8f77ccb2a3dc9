use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Written next to every set of outputs as `manifest.json`. Inputs and
/// outputs are keyed by path and carry sha256 digests.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub version: &'static str,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, config: serde_json::Value, seed: u64) -> Self {
        RunManifest {
            command: command.into(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            started_unix: now(),
            finished_unix: 0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Writes `contents` to `dir/name` and records its digest.
    pub fn output(&mut self, dir: &Path, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(name.into(), hex::encode(Sha256::digest(contents)));
        Ok(path)
    }

    /// Records a file something else already wrote into `dir`.
    pub fn existing_output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs.insert(name.into(), sha256_file(&dir.join(name))?);
        Ok(())
    }

    pub fn finish(mut self, dir: &Path) -> Result<()> {
        self.finished_unix = now();
        let text = serde_json::to_string_pretty(&self)?;
        fs::write(dir.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}
