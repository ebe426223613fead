//! Per-run provenance record, written when a run starts and rewritten when
//! it ends.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use beamjam_core::config::ExperimentConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: &str = "beamjam-manifest/v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub started_unix_ms: u64,
    pub finished_unix_ms: Option<u64>,
    pub status: RunStatus,
    pub error: Option<String>,
    pub outputs: Vec<OutputFile>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// `<dir>/<command>.manifest.json`.
pub fn manifest_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!("{command}.manifest.json"))
}

impl RunManifest {
    pub fn start(command: &str, cfg: &ExperimentConfig) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            command: command.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.run.seed,
            config: cfg.clone(),
            started_unix_ms: now_ms(),
            finished_unix_ms: None,
            status: RunStatus::Running,
            error: None,
            outputs: Vec::new(),
        }
    }

    pub fn record_output(&mut self, label: &str, contents: &[u8]) {
        self.outputs.push(OutputFile {
            path: label.into(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        });
    }

    pub fn finish(&mut self, outcome: std::result::Result<(), String>) {
        self.finished_unix_ms = Some(now_ms());
        match outcome {
            Ok(()) => self.status = RunStatus::Complete,
            Err(e) => {
                self.status = RunStatus::Failed;
                self.error = Some(e);
            }
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}
