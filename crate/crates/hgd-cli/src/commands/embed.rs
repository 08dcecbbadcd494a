//! `embed`: feature descriptions -> features.ukgf, relation labels ->
//! relations.ukgf, via the deterministic hashing embedder.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use hgd_core::io::write_features;
use hgd_core::pipeline::embed_texts;

use super::build::{read_edge_types_tsv, read_texts_tsv};
use super::StageManifest;
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedStats {
    pub nodes: u64,
    pub edge_types: u32,
    pub dim: usize,
    pub up_to_date: bool,
}

pub fn cmd_embed(entities_dir: &Path, out: &Path, cfg: &RunConfig, force: bool) -> Result<EmbedStats> {
    let _lock = DirLock::acquire(out)?;

    let mut inputs = BTreeMap::new();
    inputs.insert(
        "texts".to_string(),
        super::checksum_of(&entities_dir.join("texts.tsv"))?,
    );
    inputs.insert(
        "edge_types".to_string(),
        super::checksum_of(&entities_dir.join("edge_types.tsv"))?,
    );
    inputs.insert("dim".to_string(), cfg.dim.to_string());
    inputs.insert("embed_seed".to_string(), cfg.embed_seed().to_string());
    let manifest = StageManifest::new("embed", inputs, &["features.ukgf", "relations.ukgf"]);
    if !force && manifest.up_to_date(out) {
        let texts = read_texts_tsv(entities_dir)?;
        let types = read_edge_types_tsv(entities_dir)?;
        return Ok(EmbedStats {
            nodes: texts.len() as u64,
            edge_types: types.len() as u32,
            dim: cfg.dim,
            up_to_date: true,
        });
    }
    StageManifest::remove(out, "embed");

    let texts = read_texts_tsv(entities_dir)?;
    let features = embed_texts(&texts, cfg.dim, cfg.embed_seed());
    write_features(&out.join("features.ukgf"), &features)?;

    let types = read_edge_types_tsv(entities_dir)?;
    let relation_texts: Vec<String> = types.iter().map(|(_, label)| label.clone()).collect();
    let relations = embed_texts(&relation_texts, cfg.dim, cfg.embed_seed());
    write_features(&out.join("relations.ukgf"), &relations)?;

    manifest.store(out)?;
    Ok(EmbedStats {
        nodes: texts.len() as u64,
        edge_types: types.len() as u32,
        dim: cfg.dim,
        up_to_date: false,
    })
}
