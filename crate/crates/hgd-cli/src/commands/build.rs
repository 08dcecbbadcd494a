//! `build`: dump -> entities.jsonl + graph artifacts.
//!
//! Two passes over the dump. The first collects `id -> English label` for
//! every document so claim targets and properties can be rendered by name;
//! the second extracts complete entities, assigns dense node ids in order
//! of appearance, reorganizes each entity's feature description and
//! collects candidate edges. Entity-valued claims become directed edges
//! when both endpoints were retained; their properties become the edge
//! type vocabulary, densely renumbered in first-appearance order.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hgd_core::io::{read_screen_set, write_atomic, write_edge_list_tsv};
use hgd_core::pipeline::{reorganize_text, scan_labels, ClaimTarget, DumpParser};

use super::StageManifest;
use crate::lock::DirLock;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct BuildStats {
    pub nodes: u64,
    pub edges: u64,
    pub edge_types: u32,
    pub lines: usize,
    pub malformed_lines: usize,
    pub incomplete_entities: usize,
    pub screened_claims: usize,
    /// Entity-valued claims whose target was not retained.
    pub dangling_claims: usize,
    pub literal_claims: usize,
    pub up_to_date: bool,
}

pub fn cmd_build(
    dump: &Path,
    screen: Option<&Path>,
    out: &Path,
    force: bool,
) -> Result<BuildStats> {
    let _lock = DirLock::acquire(out)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("dump".to_string(), super::checksum_of(dump)?);
    if let Some(screen) = screen {
        inputs.insert("screen".to_string(), super::checksum_of(screen)?);
    }
    let manifest = StageManifest::new(
        "build",
        inputs,
        &[
            "entities.jsonl",
            "nodes.tsv",
            "texts.tsv",
            "edges.tsv",
            "edge_types.tsv",
            "referenced_labels.tsv",
            "stats.json",
        ],
    );
    if !force && manifest.up_to_date(out) {
        let text = std::fs::read_to_string(out.join("stats.json"))?;
        let mut stats: BuildStats = serde_json::from_str(&text)?;
        stats.up_to_date = true;
        return Ok(stats);
    }
    StageManifest::remove(out, "build");

    let screen_set = match screen {
        Some(path) => read_screen_set(path)
            .with_context(|| format!("reading screen set {}", path.display()))?,
        None => HashSet::new(),
    };

    // Pass 1: labels of everything, for text rendering.
    let reader = BufReader::new(
        File::open(dump).with_context(|| format!("opening dump {}", dump.display()))?,
    );
    let label_of = scan_labels(reader);

    // Pass 2: extract complete entities, stream out records and texts.
    let reader = BufReader::new(File::open(dump)?);
    let mut parser = DumpParser::new(reader, screen_set);
    let mut node_of_entity: HashMap<String, u64> = HashMap::new();
    let mut entity_of_node: Vec<String> = Vec::new();
    // (src node, property id, target entity id), in claim order.
    let mut candidates: Vec<(u64, String, String)> = Vec::new();
    let mut referenced: Vec<String> = Vec::new();
    let mut referenced_seen: HashSet<String> = HashSet::new();
    let mut literal_claims = 0usize;

    let entities_path = out.join("entities.jsonl");
    let texts_path = out.join("texts.tsv");
    write_atomic(&entities_path, |entities_out| {
        let io_err = |e| hgd_core::Error::io(&entities_path, e);
        let texts_res = write_atomic(&texts_path, |texts_out| {
            let t_err = |e| hgd_core::Error::io(&texts_path, e);
            for record in parser.by_ref() {
                let node = entity_of_node.len() as u64;
                node_of_entity.insert(record.id.clone(), node);
                entity_of_node.push(record.id.clone());
                for claim in &record.claims {
                    if !referenced_seen.contains(&claim.property) {
                        referenced_seen.insert(claim.property.clone());
                        referenced.push(claim.property.clone());
                    }
                    match &claim.target {
                        ClaimTarget::Entity(target) => {
                            if !referenced_seen.contains(target) {
                                referenced_seen.insert(target.clone());
                                referenced.push(target.clone());
                            }
                            candidates.push((node, claim.property.clone(), target.clone()));
                        }
                        ClaimTarget::Literal(_) => literal_claims += 1,
                    }
                }
                let line = serde_json::to_string(&record).expect("record serializes");
                writeln!(entities_out, "{line}").map_err(io_err)?;
                let text = reorganize_text(&record, &label_of);
                writeln!(texts_out, "{node}\t{text}").map_err(t_err)?;
            }
            Ok(())
        });
        texts_res
    })?;

    // Resolve candidate edges: both endpoints retained; type vocabulary in
    // first-appearance order of materialized edges.
    let mut type_of_property: BTreeMap<String, u32> = BTreeMap::new();
    let mut property_of_type: Vec<String> = Vec::new();
    let mut edges: Vec<(u64, u64, Vec<u32>)> = Vec::new();
    let mut dangling = 0usize;
    for (src, property, target) in candidates {
        let Some(&dst) = node_of_entity.get(&target) else {
            dangling += 1;
            continue;
        };
        let type_id = *type_of_property.entry(property.clone()).or_insert_with(|| {
            property_of_type.push(property.clone());
            (property_of_type.len() - 1) as u32
        });
        edges.push((src, dst, vec![type_id]));
    }

    let nodes_path = out.join("nodes.tsv");
    write_atomic(&nodes_path, |out_file| {
        for (node, entity) in entity_of_node.iter().enumerate() {
            writeln!(out_file, "{node}\t{entity}")
                .map_err(|e| hgd_core::Error::io(&nodes_path, e))?;
        }
        Ok(())
    })?;

    write_edge_list_tsv(&out.join("edges.tsv"), &edges)?;

    let types_path = out.join("edge_types.tsv");
    write_atomic(&types_path, |out_file| {
        for (type_id, property) in property_of_type.iter().enumerate() {
            let label = label_of.get(property).map(|s| s.as_str()).unwrap_or(property);
            writeln!(out_file, "{type_id}\t{property}\t{label}")
                .map_err(|e| hgd_core::Error::io(&types_path, e))?;
        }
        Ok(())
    })?;

    let labels_path = out.join("referenced_labels.tsv");
    write_atomic(&labels_path, |out_file| {
        for id in &referenced {
            if let Some(label) = label_of.get(id) {
                writeln!(out_file, "{id}\t{label}")
                    .map_err(|e| hgd_core::Error::io(&labels_path, e))?;
            }
        }
        Ok(())
    })?;

    // Distinct (src, dst) pairs, as the graph will store them.
    let edge_pairs: HashSet<(u64, u64)> = edges.iter().map(|(s, d, _)| (*s, *d)).collect();
    let parse_stats = parser.stats();
    let stats = BuildStats {
        nodes: entity_of_node.len() as u64,
        edges: edge_pairs.len() as u64,
        edge_types: property_of_type.len() as u32,
        lines: parse_stats.lines,
        malformed_lines: parse_stats.malformed,
        incomplete_entities: parse_stats.incomplete,
        screened_claims: parse_stats.screened_claims,
        dangling_claims: dangling,
        literal_claims,
        up_to_date: false,
    };
    super::write_stats_json(&out.join("stats.json"), &stats)?;
    manifest.store(out)?;
    Ok(stats)
}

/// Reads `nodes.tsv` back into entity-id order.
pub fn read_nodes_tsv(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join("nodes.tsv");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (node, entity) = line
            .split_once('\t')
            .with_context(|| format!("{}: bad row {line:?}", path.display()))?;
        anyhow::ensure!(
            node.parse::<usize>().ok() == Some(out.len()),
            "{}: non-contiguous node ids",
            path.display()
        );
        out.push(entity.to_string());
    }
    Ok(out)
}

/// Reads `texts.tsv` into node order.
pub fn read_texts_tsv(dir: &Path) -> Result<Vec<String>> {
    let path = dir.join("texts.tsv");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let (node, body) = line
            .split_once('\t')
            .with_context(|| format!("{}: bad row {line:?}", path.display()))?;
        anyhow::ensure!(
            node.parse::<usize>().ok() == Some(out.len()),
            "{}: non-contiguous node ids",
            path.display()
        );
        out.push(body.to_string());
    }
    Ok(out)
}

/// Reads `edge_types.tsv` rows as (property id, label).
pub fn read_edge_types_tsv(dir: &Path) -> Result<Vec<(String, String)>> {
    let path = dir.join("edge_types.tsv");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let type_id = cols.next().and_then(|c| c.parse::<usize>().ok());
        let property = cols.next();
        let label = cols.next();
        match (type_id, property, label) {
            (Some(t), Some(p), Some(l)) if t == out.len() => {
                out.push((p.to_string(), l.to_string()));
            }
            _ => anyhow::bail!("{}: bad row {line:?}", path.display()),
        }
    }
    Ok(out)
}

/// Reads `referenced_labels.tsv` into a lookup map.
pub fn read_referenced_labels(dir: &Path) -> Result<HashMap<String, String>> {
    let path = dir.join("referenced_labels.tsv");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for line in text.lines() {
        if let Some((id, label)) = line.split_once('\t') {
            out.insert(id.to_string(), label.to_string());
        }
    }
    Ok(out)
}
