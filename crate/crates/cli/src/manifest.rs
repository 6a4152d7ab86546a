use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub name: String,
    /// Replays must reproduce it byte for byte.
    pub deterministic: bool,
}

/// Everything needed to re-run a command, written before it computes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub settings: Settings,
    /// Keyed by the flag that named the file.
    pub inputs: BTreeMap<String, InputFile>,
    pub out_dir: PathBuf,
    pub outputs: Vec<OutputFile>,
}

/// `git describe` of the source tree at build time.
pub fn version() -> String {
    option_env!("KAST_GIT_DESCRIBE").unwrap_or("unknown").to_string()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn input(path: &Path) -> Result<InputFile> {
    let abs = std::fs::canonicalize(path).with_context(|| format!("input {}", path.display()))?;
    Ok(InputFile {
        sha256: sha256_file(&abs)?,
        path: abs,
    })
}

impl RunManifest {
    pub fn write(&self) -> Result<()> {
        let path = self.out_dir.join(FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Command line that reproduces the run into `out_dir`. Every setting
    /// is passed explicitly so neither files nor the environment leak in.
    pub fn argv(&self, out_dir: &Path) -> Vec<String> {
        let mut v = vec![
            "kast".to_string(),
            "--out-dir".to_string(),
            out_dir.display().to_string(),
            self.command.clone(),
        ];
        for (flag, f) in &self.inputs {
            v.push(format!("--{flag}"));
            v.push(f.path.display().to_string());
        }
        for (k, val) in &self.settings {
            v.push(format!("--{k}"));
            v.push(val.clone());
        }
        v
    }
}
