//! `propagate`: precompute the hop stack from a graph directory.
//!
//! Inputs are edges.tsv, features.ukgf and relations.ukgf; outputs are
//! `hop_{k}.ukgf` files plus the engine manifest. A rerun whose manifest
//! already matches the inputs exits immediately ("up to date") unless
//! `--force` wipes the spill directory first.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hgd_core::apm::{
    expected_manifest, propagate_chunked, ApmConfig, DiskStack,
};
use hgd_core::io::{read_edges_tsv, read_features};
use hgd_core::matrix::RelationEmbeddingTable;

use super::read_graph_shape;
use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropagateStats {
    pub nodes: u64,
    pub dim: u32,
    pub hops: usize,
    pub hop_checksums: Vec<String>,
    /// Wall time; excluded from the serialized stats so reruns of an
    /// identical pipeline produce identical stats files.
    #[serde(skip)]
    pub seconds: f64,
    pub up_to_date: bool,
}

pub fn cmd_propagate(
    graph_dir: &Path,
    out: &Path,
    cfg: &RunConfig,
    force: bool,
) -> Result<PropagateStats> {
    let _lock = DirLock::acquire(out)?;
    let started = Instant::now();

    let shape = read_graph_shape(graph_dir)?;
    let graph = read_edges_tsv(&graph_dir.join("edges.tsv"), shape.nodes, shape.edge_types)?;
    let features_path = graph_dir.join("features.ukgf");
    let features = read_features(&features_path)
        .with_context(|| format!("reading {}", features_path.display()))?;
    let relations_path = graph_dir.join("relations.ukgf");
    let relations = read_features(&relations_path)
        .with_context(|| format!("reading {}", relations_path.display()))?;
    let rel_table = RelationEmbeddingTable::new(relations, shape.edge_types)?;

    let apm_cfg = ApmConfig {
        num_hops: cfg.k,
        isolated_policy: cfg.isolated_policy,
        type_combine: cfg.type_combine,
        add_reverse: cfg.add_reverse,
    };
    let expected = expected_manifest(&graph, &rel_table, &features, &apm_cfg);

    if force {
        hgd_core::apm::StackManifest::remove_from(out);
    } else if let Ok(existing) = DiskStack::open(out) {
        if *existing.manifest() == expected {
            let hop_checksums = collect_hop_checksums(&existing)?;
            return Ok(PropagateStats {
                nodes: expected.rows,
                dim: expected.dim,
                hops: expected.num_hops,
                hop_checksums,
                seconds: started.elapsed().as_secs_f64(),
                up_to_date: true,
            });
        }
    }

    let block_size = if cfg.block_size == 0 {
        (shape.nodes as usize).max(1)
    } else {
        cfg.block_size
    };
    let stack = propagate_chunked(&graph, &rel_table, &features, &apm_cfg, block_size, out)?;
    let hop_checksums = collect_hop_checksums(&stack)?;
    Ok(PropagateStats {
        nodes: expected.rows,
        dim: expected.dim,
        hops: expected.num_hops,
        hop_checksums,
        seconds: started.elapsed().as_secs_f64(),
        up_to_date: false,
    })
}

fn collect_hop_checksums(stack: &DiskStack) -> Result<Vec<String>> {
    (0..=stack.num_hops())
        .map(|k| super::checksum_of(&stack.hop_path(k)))
        .collect()
}
