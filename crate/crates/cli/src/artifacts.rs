//! Stamped stage outputs.
//!
//! CSV artifacts start with a `# config_hash=… seed=…` line; JSON artifacts
//! wrap their payload as `{config_hash, seed, data}`. Readers refuse files
//! whose stamp differs from the current configuration. Writes go through a
//! temporary file and a rename, so an interrupted stage never leaves a
//! half-written artifact behind.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    config_hash: String,
    seed: u64,
    data: T,
}

#[derive(Debug, Clone)]
pub struct OutputDir {
    pub root: PathBuf,
    hash: String,
    seed: u64,
}

impl OutputDir {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            root: cfg.out.clone(),
            hash: cfg.hash(),
            seed: cfg.seed,
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn stamp(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(rel);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    /// Runs `write` against a buffer with the stamp as its comment line.
    pub fn write_csv<E: std::fmt::Display>(
        &self,
        rel: &str,
        write: impl FnOnce(&mut Vec<u8>, Option<&str>) -> Result<(), E>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = Vec::new();
        write(&mut buf, Some(&self.stamp())).map_err(CliError::data)?;
        self.write_bytes(rel, &buf)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, data: &T) -> Result<PathBuf, CliError> {
        let env = Envelope {
            config_hash: self.hash.clone(),
            seed: self.seed,
            data,
        };
        let mut text = serde_json::to_string_pretty(&env).map_err(CliError::data)?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    /// Whether `rel` exists and carries the current stamp.
    pub fn is_current_csv(&self, rel: &str) -> bool {
        fs::read_to_string(self.path(rel))
            .map(|t| t.lines().next() == Some(&format!("# {}", self.stamp())))
            .unwrap_or(false)
    }

    /// Reads a CSV produced by `stage`, checking its stamp.
    pub fn read_csv(&self, stage: &'static str, rel: &str) -> Result<String, CliError> {
        let path = self.path(rel);
        let text = read_upstream(stage, &path)?;
        if text.lines().next() != Some(&format!("# {}", self.stamp())) {
            return Err(CliError::StaleArtifact { stage, path });
        }
        Ok(text)
    }

    pub fn read_json<T: DeserializeOwned>(&self, stage: &'static str, rel: &str) -> Result<T, CliError> {
        let path = self.path(rel);
        let text = read_upstream(stage, &path)?;
        let env: Envelope<serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        if env.config_hash != self.hash || env.seed != self.seed {
            return Err(CliError::StaleArtifact { stage, path });
        }
        serde_json::from_value(env.data).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

fn read_upstream(stage: &'static str, path: &Path) -> Result<String, CliError> {
    if !path.exists() {
        return Err(CliError::MissingStage {
            stage,
            path: path.to_path_buf(),
        });
    }
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}
