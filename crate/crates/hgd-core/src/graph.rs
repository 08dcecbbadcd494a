//! Immutable directed heterogeneous graphs with multi-typed edges.
//!
//! Storage is destination-major compressed sparse form: the propagation
//! kernel aggregates at destinations, so per-destination neighbor scans are
//! the hot path and an out-CSR is never materialized. Node indices are
//! 64-bit (the format must represent graphs in the tens of millions of
//! nodes and hundreds of millions of edges); type ids are 32-bit.
//!
//! A (src, dst) pair appears at most once; edges of several types between
//! the same pair are stored as one adjacency entry with a sorted,
//! deduplicated type-id list.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeteroGraph {
    node_count: u64,
    edge_count: u64,
    edge_type_count: u32,
    /// Per-destination prefix sums into `in_src` / `type_offsets`, length n+1.
    in_offsets: Vec<u64>,
    /// Source node of each (src, dst) pair, grouped by dst, ascending src.
    in_src: Vec<u64>,
    /// Prefix sums into `type_ids`, length edge_count+1.
    type_offsets: Vec<u64>,
    /// Sorted, deduplicated type ids per pair.
    type_ids: Vec<u32>,
    out_degree: Vec<u64>,
}

impl HeteroGraph {
    pub fn node_count(&self) -> u64 {
        self.node_count
    }

    /// Number of distinct directed (src, dst) pairs.
    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn edge_type_count(&self) -> u32 {
        self.edge_type_count
    }

    pub fn in_degree(&self, v: u64) -> u64 {
        self.in_offsets[v as usize + 1] - self.in_offsets[v as usize]
    }

    pub fn out_degree(&self, v: u64) -> u64 {
        self.out_degree[v as usize]
    }

    /// Total degree (in + out), used to rank seed candidates when sampling.
    pub fn total_degree(&self, v: u64) -> u64 {
        self.in_degree(v) + self.out_degree(v)
    }

    /// Iterates v's in-neighbors as (source, type ids), ascending by source.
    ///
    /// The ascending order is a determinism contract: the propagation kernel
    /// sums messages in exactly this order.
    pub fn in_neighbors(&self, v: u64) -> Result<InNeighbors<'_>> {
        if v >= self.node_count {
            return Err(Error::NodeOutOfRange {
                index: v,
                bound: self.node_count,
            });
        }
        let lo = self.in_offsets[v as usize] as usize;
        let hi = self.in_offsets[v as usize + 1] as usize;
        Ok(InNeighbors {
            graph: self,
            pos: lo,
            end: hi,
        })
    }

    /// All (src, dst, types) triples in (dst, src) order.
    pub fn iter_edges(&self) -> impl Iterator<Item = (u64, u64, &[u32])> + '_ {
        (0..self.node_count).flat_map(move |dst| {
            let lo = self.in_offsets[dst as usize] as usize;
            let hi = self.in_offsets[dst as usize + 1] as usize;
            (lo..hi).map(move |p| {
                let src = self.in_src[p];
                let tlo = self.type_offsets[p] as usize;
                let thi = self.type_offsets[p + 1] as usize;
                (src, dst, &self.type_ids[tlo..thi])
            })
        })
    }

    /// Returns a graph where every edge also exists in the opposite
    /// direction with the same type ids. Idempotent on symmetric graphs.
    pub fn add_reverse_edges(&self) -> HeteroGraph {
        let mut edges = Vec::with_capacity(self.edge_count as usize * 2);
        for (src, dst, types) in self.iter_edges() {
            edges.push((src, dst, types.to_vec()));
            edges.push((dst, src, types.to_vec()));
        }
        // Inputs come from a valid graph, so rebuilding cannot fail.
        build_graph(edges, self.node_count, self.edge_type_count)
            .expect("reversing a valid graph preserves validity")
    }
}

pub struct InNeighbors<'a> {
    graph: &'a HeteroGraph,
    pos: usize,
    end: usize,
}

impl<'a> Iterator for InNeighbors<'a> {
    type Item = (u64, &'a [u32]);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.end {
            return None;
        }
        let p = self.pos;
        self.pos += 1;
        let src = self.graph.in_src[p];
        let lo = self.graph.type_offsets[p] as usize;
        let hi = self.graph.type_offsets[p + 1] as usize;
        Some((src, &self.graph.type_ids[lo..hi]))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let remaining = self.end - self.pos;
        (remaining, Some(remaining))
    }
}

impl ExactSizeIterator for InNeighbors<'_> {}

/// Builds an immutable graph from an edge list.
///
/// Duplicate (src, dst) pairs are merged into a single adjacency entry
/// holding the union of their type ids, so the result is insensitive to
/// the order of the input list.
pub fn build_graph(
    edges: Vec<(u64, u64, Vec<u32>)>,
    node_count: u64,
    edge_type_count: u32,
) -> Result<HeteroGraph> {
    for (src, dst, types) in &edges {
        for &node in [src, dst] {
            if node >= node_count {
                return Err(Error::NodeOutOfRange {
                    index: node,
                    bound: node_count,
                });
            }
        }
        if types.is_empty() {
            return Err(Error::EmptyTypeList {
                src: *src,
                dst: *dst,
            });
        }
        for &t in types {
            if t >= edge_type_count {
                return Err(Error::TypeOutOfRange {
                    index: t,
                    bound: edge_type_count,
                });
            }
        }
    }

    // Destination-major sort; duplicate pairs land adjacent and merge below.
    let mut edges = edges;
    edges.par_sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));

    let n = node_count as usize;
    let mut in_offsets = vec![0u64; n + 1];
    let mut in_src = Vec::new();
    let mut type_offsets = vec![0u64];
    let mut type_ids = Vec::new();
    let mut out_degree = vec![0u64; n];

    let mut i = 0;
    while i < edges.len() {
        let (src, dst, _) = edges[i];
        let mut merged: Vec<u32> = Vec::new();
        while i < edges.len() && edges[i].0 == src && edges[i].1 == dst {
            merged.extend_from_slice(&edges[i].2);
            i += 1;
        }
        merged.sort_unstable();
        merged.dedup();

        in_offsets[dst as usize + 1] += 1;
        in_src.push(src);
        type_ids.extend_from_slice(&merged);
        type_offsets.push(type_ids.len() as u64);
        out_degree[src as usize] += 1;
    }
    for v in 0..n {
        in_offsets[v + 1] += in_offsets[v];
    }

    let edge_count = in_src.len() as u64;
    Ok(HeteroGraph {
        node_count,
        edge_count,
        edge_type_count,
        in_offsets,
        in_src,
        type_offsets,
        type_ids,
        out_degree,
    })
}
