//! Subcommand implementations with file-based handoff between stages.
//!
//! Each stage writes its artifacts atomically plus a stage manifest
//! recording input checksums and the config values it depends on. A rerun
//! whose manifest matches is a no-op ("up to date"); `--force` rebuilds.

pub mod annotate;
pub mod build;
pub mod embed;
pub mod pipeline;
pub mod propagate;
pub mod sample;
pub mod train;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hgd_core::io::{file_sha256, write_atomic};

/// Records what a stage consumed, for idempotent reruns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl StageManifest {
    pub fn new(stage: &str, inputs: BTreeMap<String, String>, outputs: &[&str]) -> Self {
        StageManifest {
            stage: stage.to_string(),
            inputs,
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn path(dir: &Path, stage: &str) -> std::path::PathBuf {
        dir.join(format!("{stage}.manifest.json"))
    }

    /// True when the stored manifest matches and every output is present.
    pub fn up_to_date(&self, dir: &Path) -> bool {
        let path = Self::path(dir, &self.stage);
        let Ok(text) = std::fs::read_to_string(&path) else {
            return false;
        };
        let Ok(existing) = serde_json::from_str::<StageManifest>(&text) else {
            return false;
        };
        existing == *self && self.outputs.iter().all(|name| dir.join(name).exists())
    }

    pub fn store(&self, dir: &Path) -> Result<()> {
        let path = Self::path(dir, &self.stage);
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&path, |out| {
            out.write_all(text.as_bytes())
                .map_err(|e| hgd_core::Error::io(&path, e))
        })?;
        Ok(())
    }

    pub fn remove(dir: &Path, stage: &str) {
        let _ = std::fs::remove_file(Self::path(dir, stage));
    }
}

pub fn checksum_of(path: &Path) -> Result<String> {
    file_sha256(path).with_context(|| format!("hashing {}", path.display()))
}

/// Writes a serializable stats object as pretty JSON, atomically.
pub fn write_stats_json<T: Serialize>(path: &Path, stats: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(stats)?;
    write_atomic(path, |out| {
        out.write_all(text.as_bytes())
            .map_err(|e| hgd_core::Error::io(path, e))
    })?;
    Ok(())
}

/// Reads `stats.json` of a build/sample directory: node, edge and type
/// counts downstream stages need to size their structures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GraphShape {
    pub nodes: u64,
    pub edges: u64,
    pub edge_types: u32,
}

pub fn read_graph_shape(dir: &Path) -> Result<GraphShape> {
    let path = dir.join("stats.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let field = |name: &str| -> Result<u64> {
        value
            .get(name)
            .and_then(|v| v.as_u64())
            .with_context(|| format!("{}: missing field {name}", path.display()))
    };
    Ok(GraphShape {
        nodes: field("nodes")?,
        edges: field("edges")?,
        edge_types: field("edge_types")? as u32,
    })
}
