//! Disk-backed propagation for stacks larger than memory.
//!
//! Destinations are processed in contiguous blocks; each finished hop is
//! written to `hop_{k}.ukgf` in the spill directory and memory-mapped as
//! the source of the next hop, so peak memory is one output block plus the
//! mapping. Hop files are produced through temp-then-rename, which makes a
//! present file a completed hop: a restart after a crash revalidates the
//! manifest and resumes after the last completed hop. Output is bitwise
//! identical to the in-memory path because both drive the same per-row
//! kernel.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::io::{
    features_to_bytes, read_features, read_features_header, write_atomic, MappedFeatures,
    UKGF_MAGIC, UKGF_VERSION,
};
use crate::matrix::{FeatureMatrix, RelationEmbeddingTable};

use super::{propagate_block, ApmConfig, IsolatedPolicy, PropagationStack, TypeCombine};

/// Sidecar describing a spilled stack: shape, config and input checksums.
/// A stale or missing manifest invalidates every hop file in the directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    pub rows: u64,
    pub dim: u32,
    pub num_hops: usize,
    pub isolated_policy: IsolatedPolicy,
    pub type_combine: TypeCombine,
    pub add_reverse: bool,
    /// SHA-256 of the inputs: keys `features`, `relations`, `graph`.
    pub input_checksums: BTreeMap<String, String>,
}

impl StackManifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join("manifest.json")
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = Self::path_in(dir);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            format: "manifest",
            line: 0,
            reason: e.to_string(),
        })
    }

    fn store(&self, dir: &Path) -> Result<()> {
        let path = Self::path_in(dir);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, |out| {
            out.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))
        })
    }

    /// Drops the manifest so the next run rebuilds from scratch.
    pub fn remove_from(dir: &Path) {
        let _ = std::fs::remove_file(Self::path_in(dir));
    }
}

/// A propagation stack persisted as one features file per hop.
#[derive(Debug)]
pub struct DiskStack {
    dir: PathBuf,
    manifest: StackManifest,
}

impl DiskStack {
    /// Opens an existing spill directory, validating the manifest and the
    /// presence and shape of every hop file.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest = StackManifest::load(dir)?;
        let stack = DiskStack {
            dir: dir.to_path_buf(),
            manifest,
        };
        for k in 0..=stack.manifest.num_hops {
            let path = stack.hop_path(k);
            if !hop_file_valid(&path, stack.manifest.rows, stack.manifest.dim) {
                return Err(Error::Malformed {
                    format: "UKGF",
                    line: 0,
                    reason: format!("{}: missing or invalid hop file", path.display()),
                });
            }
        }
        Ok(stack)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &StackManifest {
        &self.manifest
    }

    pub fn num_hops(&self) -> usize {
        self.manifest.num_hops
    }

    pub fn hop_path(&self, k: usize) -> PathBuf {
        self.dir.join(format!("hop_{k}.ukgf"))
    }

    /// Memory-maps hop `k` without loading it.
    pub fn map_hop(&self, k: usize) -> Result<MappedFeatures> {
        MappedFeatures::open(&self.hop_path(k))
    }

    /// Loads the whole stack into memory.
    pub fn load(&self) -> Result<PropagationStack> {
        let mut hops = Vec::with_capacity(self.manifest.num_hops + 1);
        for k in 0..=self.manifest.num_hops {
            hops.push(read_features(&self.hop_path(k))?);
        }
        PropagationStack::new(hops)
    }
}

/// Canonical digest of the graph structure, used to tie a spill directory
/// to the exact graph it was computed from.
pub(crate) fn graph_checksum(g: &HeteroGraph) -> String {
    let mut hasher = Sha256::new();
    hasher.update(g.node_count().to_le_bytes());
    hasher.update((g.edge_type_count() as u64).to_le_bytes());
    for (src, dst, types) in g.iter_edges() {
        hasher.update(src.to_le_bytes());
        hasher.update(dst.to_le_bytes());
        hasher.update((types.len() as u64).to_le_bytes());
        for &t in types {
            hasher.update(t.to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn bytes_checksum(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn hop_file_valid(path: &Path, rows: u64, dim: u32) -> bool {
    match read_features_header(path) {
        Ok((r, d)) if r == rows && d == dim => {
            let expected = 20 + rows * dim as u64 * 4;
            std::fs::metadata(path)
                .map(|m| m.len() == expected)
                .unwrap_or(false)
        }
        _ => false,
    }
}

/// The manifest [`propagate_chunked`] would write for these inputs; lets
/// callers decide whether an existing spill directory is already current.
pub fn expected_manifest(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    x: &FeatureMatrix,
    cfg: &ApmConfig,
) -> StackManifest {
    let mut checksums = BTreeMap::new();
    checksums.insert("graph".to_string(), graph_checksum(g));
    checksums.insert("features".to_string(), bytes_checksum(&features_to_bytes(x)));
    checksums.insert(
        "relations".to_string(),
        bytes_checksum(&features_to_bytes(rel_table.as_matrix())),
    );
    StackManifest {
        rows: x.rows() as u64,
        dim: x.dim() as u32,
        num_hops: cfg.num_hops,
        isolated_policy: cfg.isolated_policy,
        type_combine: cfg.type_combine,
        add_reverse: cfg.add_reverse,
        input_checksums: checksums,
    }
}

/// Runs K hops block by block, spilling each hop to `spill_dir`.
///
/// Bitwise-equal to [`super::propagate`] on the same inputs. If the
/// directory already holds a manifest matching these inputs and config,
/// completed hop files are reused; otherwise stale files are removed and
/// the stack is rebuilt from scratch.
pub fn propagate_chunked(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    x: &FeatureMatrix,
    cfg: &ApmConfig,
    block_size: usize,
    spill_dir: &Path,
) -> Result<DiskStack> {
    cfg.validate()?;
    if block_size < 1 {
        return Err(Error::InvalidInput("block_size must be >= 1".into()));
    }
    if x.rows() as u64 != g.node_count() || x.dim() != rel_table.dim() {
        return Err(Error::ShapeMismatch(format!(
            "features {} x {} for a {}-node graph with {}-dim relations",
            x.rows(),
            x.dim(),
            g.node_count(),
            rel_table.dim()
        )));
    }
    x.check_finite()?;

    let manifest = expected_manifest(g, rel_table, x, cfg);

    std::fs::create_dir_all(spill_dir).map_err(|e| Error::io(spill_dir, e))?;
    let resume = match StackManifest::load(spill_dir) {
        Ok(existing) if existing == manifest => true,
        Ok(_) | Err(_) => {
            // Different inputs or config: stale hop files must not be reused.
            for entry in std::fs::read_dir(spill_dir).map_err(|e| Error::io(spill_dir, e))? {
                let entry = entry.map_err(|e| Error::io(spill_dir, e))?;
                let name = entry.file_name();
                let name = name.to_string_lossy();
                if name.starts_with("hop_") || name == "manifest.json" {
                    std::fs::remove_file(entry.path())
                        .map_err(|e| Error::io(entry.path(), e))?;
                }
            }
            manifest.store(spill_dir)?;
            false
        }
    };

    let stack = DiskStack {
        dir: spill_dir.to_path_buf(),
        manifest,
    };

    // Hop 0 is the input feature matrix, bit for bit.
    let hop0 = stack.hop_path(0);
    if !(resume && hop_file_valid(&hop0, stack.manifest.rows, stack.manifest.dim)) {
        crate::io::write_features(&hop0, x)?;
    }

    let graph;
    let g = if cfg.add_reverse {
        graph = g.add_reverse_edges();
        &graph
    } else {
        g
    };

    let n = stack.manifest.rows;
    for k in 1..=cfg.num_hops {
        let out_path = stack.hop_path(k);
        if resume && hop_file_valid(&out_path, n, stack.manifest.dim) {
            continue;
        }
        let prev = MappedFeatures::open(&stack.hop_path(k - 1))?;
        write_hop_blocks(g, rel_table, &prev, cfg, block_size, &out_path)?;
    }

    Ok(stack)
}

fn write_hop_blocks(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    prev: &MappedFeatures,
    cfg: &ApmConfig,
    block_size: usize,
    out_path: &Path,
) -> Result<()> {
    let n = g.node_count();
    let dim = prev.dim();
    write_atomic(out_path, |out| {
        let io_err = |e| Error::io(out_path, e);
        out.write_all(UKGF_MAGIC).map_err(io_err)?;
        out.write_all(&UKGF_VERSION.to_le_bytes()).map_err(io_err)?;
        out.write_all(&n.to_le_bytes()).map_err(io_err)?;
        out.write_all(&(dim as u32).to_le_bytes()).map_err(io_err)?;

        let mut block = vec![0.0f32; block_size * dim];
        let mut start = 0u64;
        while start < n {
            let end = (start + block_size as u64).min(n);
            let len = (end - start) as usize * dim;
            propagate_block(g, rel_table, prev, cfg, start..end, &mut block[..len])?;
            for (i, v) in block[..len].iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        row: start as usize + i / dim,
                        col: i % dim,
                    });
                }
                out.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
            start = end;
        }
        Ok(())
    })
}
