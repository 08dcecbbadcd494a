//! `sample`: snowball-subsample a built graph directory into a smaller
//! one, slicing features and labels along with the remap.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hgd_core::io::{
    read_edges_tsv, read_features, read_labels_tsv, write_edges_tsv, write_features,
    write_labels_tsv,
};
use hgd_core::labels::LabelMatrix;
use hgd_core::matrix::FeatureMatrix;
use hgd_core::pipeline::{snowball_sample, WalkParams};

use super::{read_graph_shape, GraphShape, StageManifest};
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleStats {
    pub nodes: u64,
    pub edges: u64,
    pub edge_types: u32,
    pub uniform_filled: usize,
    pub up_to_date: bool,
}

pub fn cmd_sample(
    graph_dir: &Path,
    out: &Path,
    cfg: &RunConfig,
    target_n: u64,
    force: bool,
) -> Result<SampleStats> {
    let _lock = DirLock::acquire(out)?;

    let features_path = graph_dir.join("features.ukgf");
    let labels_path = graph_dir.join("labels.tsv");
    let mut inputs = BTreeMap::new();
    inputs.insert(
        "edges".to_string(),
        super::checksum_of(&graph_dir.join("edges.tsv"))?,
    );
    if features_path.exists() {
        inputs.insert("features".to_string(), super::checksum_of(&features_path)?);
    }
    if labels_path.exists() {
        inputs.insert("labels".to_string(), super::checksum_of(&labels_path)?);
    }
    inputs.insert("target_n".to_string(), target_n.to_string());
    inputs.insert(
        "walk".to_string(),
        format!(
            "{}:{}:{}:{}",
            cfg.high_degree_fraction,
            cfg.walk_seeds,
            cfg.restart_prob,
            cfg.sample_seed()
        ),
    );
    let manifest = StageManifest::new(
        "sample",
        inputs,
        &["edges.tsv", "remap.tsv", "stats.json"],
    );
    if !force && manifest.up_to_date(out) {
        let shape = read_graph_shape(out)?;
        let text = std::fs::read_to_string(out.join("stats.json"))?;
        let stats: SampleStats = serde_json::from_str(&text).unwrap_or(SampleStats {
            nodes: shape.nodes,
            edges: shape.edges,
            edge_types: shape.edge_types,
            uniform_filled: 0,
            up_to_date: true,
        });
        return Ok(SampleStats {
            up_to_date: true,
            ..stats
        });
    }
    StageManifest::remove(out, "sample");

    let shape: GraphShape = read_graph_shape(graph_dir)?;
    let graph = read_edges_tsv(&graph_dir.join("edges.tsv"), shape.nodes, shape.edge_types)?;
    let walk = WalkParams {
        num_seeds: cfg.walk_seeds,
        restart_prob: cfg.restart_prob,
    };
    let sample = snowball_sample(
        &graph,
        target_n,
        cfg.high_degree_fraction,
        &walk,
        cfg.sample_seed(),
    )?;

    write_edges_tsv(&out.join("edges.tsv"), &sample.graph)?;
    sample.write_remap_tsv(&out.join("remap.tsv"))?;

    if features_path.exists() {
        let features = read_features(&features_path)
            .with_context(|| format!("reading {}", features_path.display()))?;
        let mut sliced = FeatureMatrix::zeros(sample.old_ids.len(), features.dim());
        for (new_id, &old_id) in sample.old_ids.iter().enumerate() {
            sliced
                .row_mut(new_id)
                .copy_from_slice(features.row(old_id as usize));
        }
        write_features(&out.join("features.ukgf"), &sliced)?;
    }
    if labels_path.exists() {
        // Class count is recoverable from the annotation stats; fall back
        // to the configured label space.
        let labels = read_labels_tsv(&labels_path, shape.nodes, cfg.classes)?;
        let lists: Vec<(u64, Vec<u32>)> = sample
            .old_ids
            .iter()
            .enumerate()
            .map(|(new_id, &old_id)| (new_id as u64, labels.classes(old_id).to_vec()))
            .collect();
        let sliced = LabelMatrix::from_lists(lists, sample.old_ids.len() as u64, cfg.classes)?;
        write_labels_tsv(&out.join("labels.tsv"), &sliced)?;
    }

    let stats = SampleStats {
        nodes: sample.graph.node_count(),
        edges: sample.graph.edge_count(),
        edge_types: sample.graph.edge_type_count(),
        uniform_filled: sample.uniform_filled,
        up_to_date: false,
    };
    super::write_stats_json(&out.join("stats.json"), &stats)?;
    manifest.store(out)?;
    Ok(stats)
}
