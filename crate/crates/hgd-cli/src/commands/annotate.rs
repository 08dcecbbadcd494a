//! `annotate`: instance-of harvesting, k-means over parent embeddings,
//! and multi-label assignment.
//!
//! Parent entities are embedded from the best text available: their full
//! feature description when they are retained nodes, otherwise their bare
//! label, otherwise the raw id.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use hgd_core::io::write_labels_tsv;
use hgd_core::matrix::FeatureMatrix;
use hgd_core::pipeline::{
    annotate, cluster_labels, embed_text, harvest_labels, EntityRecord,
};

use super::build::{read_nodes_tsv, read_referenced_labels, read_texts_tsv};
use super::StageManifest;
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotateStats {
    pub parents: usize,
    pub classes: u32,
    pub labeled_nodes: u64,
    pub multi_label_nodes: u64,
    pub up_to_date: bool,
}

pub fn read_entities_jsonl(dir: &Path) -> Result<Vec<EntityRecord>> {
    let path = dir.join("entities.jsonl");
    let file = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let mut records = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let record: EntityRecord = serde_json::from_str(&line)
            .with_context(|| format!("{}:{}", path.display(), lineno + 1))?;
        records.push(record);
    }
    Ok(records)
}

pub fn cmd_annotate(
    entities_dir: &Path,
    out: &Path,
    cfg: &RunConfig,
    force: bool,
) -> Result<AnnotateStats> {
    let _lock = DirLock::acquire(out)?;

    let mut inputs = BTreeMap::new();
    inputs.insert(
        "entities".to_string(),
        super::checksum_of(&entities_dir.join("entities.jsonl"))?,
    );
    inputs.insert("classes".to_string(), cfg.classes.to_string());
    inputs.insert("instance_of".to_string(), cfg.instance_of.clone());
    inputs.insert("dim".to_string(), cfg.dim.to_string());
    inputs.insert("embed_seed".to_string(), cfg.embed_seed().to_string());
    inputs.insert("cluster_seed".to_string(), cfg.cluster_seed().to_string());
    inputs.insert("kmeans_max_iters".to_string(), cfg.kmeans_max_iters.to_string());
    let manifest = StageManifest::new(
        "annotate",
        inputs,
        &["labels.tsv", "annotation_map.tsv", "annotate_stats.json"],
    );
    if !force && manifest.up_to_date(out) {
        let text = std::fs::read_to_string(out.join("annotate_stats.json"))?;
        let mut stats: AnnotateStats = serde_json::from_str(&text)?;
        stats.up_to_date = true;
        return Ok(stats);
    }
    StageManifest::remove(out, "annotate");

    let records = read_entities_jsonl(entities_dir)?;
    let (f_all, per_entity) = harvest_labels(&records, &cfg.instance_of);
    if f_all.is_empty() {
        bail!(
            "no {:?} claims found; cannot build a label space",
            cfg.instance_of
        );
    }
    if (f_all.len() as u64) < cfg.classes as u64 {
        bail!(
            "{} distinct parents cannot form {} classes (set classes <= {})",
            f_all.len(),
            cfg.classes,
            f_all.len()
        );
    }

    // Parent texts: full description for retained nodes, else label, else id.
    let nodes = read_nodes_tsv(entities_dir)?;
    let texts = read_texts_tsv(entities_dir)?;
    let node_of: HashMap<&str, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let labels_of = read_referenced_labels(entities_dir)?;
    let parents: Vec<String> = f_all.iter().cloned().collect();
    let mut rows = Vec::with_capacity(parents.len());
    for parent in &parents {
        let text = match node_of.get(parent.as_str()) {
            Some(&node) => texts[node].clone(),
            None => labels_of.get(parent).cloned().unwrap_or_else(|| parent.clone()),
        };
        rows.push(embed_text(&text, cfg.dim, cfg.embed_seed()));
    }
    let embeddings = FeatureMatrix::from_rows(&rows)?;

    let map = cluster_labels(
        &parents,
        &embeddings,
        cfg.classes,
        cfg.cluster_seed(),
        cfg.kmeans_max_iters,
    )?;
    let labels = annotate(&per_entity, &map)?;

    write_labels_tsv(&out.join("labels.tsv"), &labels)?;
    map.write_tsv(&out.join("annotation_map.tsv"))?;

    let labeled = labels.labeled_nodes();
    let multi = labeled
        .iter()
        .filter(|&&v| labels.classes(v).len() > 1)
        .count() as u64;
    let stats = AnnotateStats {
        parents: parents.len(),
        classes: cfg.classes,
        labeled_nodes: labeled.len() as u64,
        multi_label_nodes: multi,
        up_to_date: false,
    };
    super::write_stats_json(&out.join("annotate_stats.json"), &stats)?;
    manifest.store(out)?;
    Ok(stats)
}
