//! Brute-force reference for the propagation kernel.
//!
//! Materializes the relation-aware adjacency and message tensors as dense
//! n x n x d arrays and evaluates the hop update by the literal tensor
//! formulas. Deliberately shares no code with the sparse kernel beyond the
//! config types: combination, norms, softmax and the weighted contraction
//! are all written out as plain loops here, so agreement between the two
//! paths is meaningful evidence.

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::matrix::{FeatureMatrix, RelationEmbeddingTable};

use super::{ApmConfig, IsolatedPolicy, PropagationStack, TypeCombine};

/// Largest node count the dense tensors are allowed to reach.
const MAX_ORACLE_NODES: u64 = 256;

/// Dense n x n x d tensor, zero-initialized.
struct DenseTensor {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    fn zeros(n: usize, d: usize) -> Self {
        DenseTensor {
            n,
            d,
            data: vec![0.0; n * n * d],
        }
    }

    fn at(&self, dst: usize, src: usize, j: usize) -> f64 {
        self.data[(dst * self.n + src) * self.d + j]
    }

    fn at_mut(&mut self, dst: usize, src: usize, j: usize) -> &mut f64 {
        &mut self.data[(dst * self.n + src) * self.d + j]
    }
}

/// Test-scale propagation by explicit dense tensor algebra.
///
/// Semantically identical to [`super::propagate`]; guarded to small graphs
/// because the tensors take O(n^2 d) memory.
pub fn dense_oracle(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    x: &FeatureMatrix,
    cfg: &ApmConfig,
) -> Result<PropagationStack> {
    cfg.validate()?;
    if g.node_count() > MAX_ORACLE_NODES {
        return Err(Error::SizeGuard(format!(
            "dense oracle limited to {MAX_ORACLE_NODES} nodes, got {}",
            g.node_count()
        )));
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

    let graph;
    let g = if cfg.add_reverse {
        graph = g.add_reverse_edges();
        &graph
    } else {
        g
    };
    let n = g.node_count() as usize;
    let d = x.dim();

    // Relation-aware adjacency: entry [v][u] holds the combined embedding
    // of edge u -> v; the mask records which pairs are structural edges.
    let mut adjacency = DenseTensor::zeros(n, d);
    let mut edge_mask = vec![false; n * n];
    for (src, dst, types) in g.iter_edges() {
        let (src, dst) = (src as usize, dst as usize);
        edge_mask[dst * n + src] = true;
        for &t in types {
            let row = rel_table.row(t);
            for j in 0..d {
                *adjacency.at_mut(dst, src, j) += row[j] as f64;
            }
        }
        if let TypeCombine::Mean = cfg.type_combine {
            for j in 0..d {
                *adjacency.at_mut(dst, src, j) *= 1.0 / types.len() as f64;
            }
        }
    }

    let mut hops = Vec::with_capacity(cfg.num_hops + 1);
    hops.push(x.clone());

    for _ in 0..cfg.num_hops {
        let prev = hops.last().unwrap();

        // Dimension lift: entry [v][u] broadcasts the source row c_k[u].
        let mut lifted = DenseTensor::zeros(n, d);
        for dst in 0..n {
            for src in 0..n {
                for j in 0..d {
                    *lifted.at_mut(dst, src, j) = prev.row(src)[j] as f64;
                }
            }
        }

        // Hadamard product with the adjacency tensor: per-pair messages.
        let mut messages = DenseTensor::zeros(n, d);
        for dst in 0..n {
            for src in 0..n {
                for j in 0..d {
                    *messages.at_mut(dst, src, j) =
                        adjacency.at(dst, src, j) * lifted.at(dst, src, j);
                }
            }
        }

        // L2 norms over the third dimension.
        let mut norms = vec![0.0f64; n * n];
        for dst in 0..n {
            for src in 0..n {
                let mut sq = 0.0;
                for j in 0..d {
                    sq += messages.at(dst, src, j) * messages.at(dst, src, j);
                }
                norms[dst * n + src] = sq.sqrt();
            }
        }

        // Row-wise softmax over structural edges only: zeros in the
        // adjacency tensor are non-edges, not zero-valued scores.
        let mut coefficients = vec![0.0f64; n * n];
        for dst in 0..n {
            let mut max = f64::NEG_INFINITY;
            for src in 0..n {
                if edge_mask[dst * n + src] {
                    max = max.max(norms[dst * n + src]);
                }
            }
            if max == f64::NEG_INFINITY {
                continue; // isolated destination, handled below
            }
            let mut sum = 0.0;
            for src in 0..n {
                if edge_mask[dst * n + src] {
                    let e = (norms[dst * n + src] - max).exp();
                    coefficients[dst * n + src] = e;
                    sum += e;
                }
            }
            for src in 0..n {
                coefficients[dst * n + src] /= sum;
            }
        }

        // Contraction along the second dimension: weighted message sum.
        let mut next = FeatureMatrix::zeros(n, d);
        for dst in 0..n {
            let has_edges = (0..n).any(|src| edge_mask[dst * n + src]);
            if !has_edges {
                match cfg.isolated_policy {
                    IsolatedPolicy::Zero => {}
                    IsolatedPolicy::Carry => {
                        next.row_mut(dst).copy_from_slice(prev.row(dst));
                    }
                }
                continue;
            }
            for j in 0..d {
                let mut acc = 0.0f64;
                for src in 0..n {
                    acc += coefficients[dst * n + src] * messages.at(dst, src, j);
                }
                next.row_mut(dst)[j] = acc as f32;
            }
        }

        hops.push(next);
    }

    PropagationStack::new(hops)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::super::{propagate, propagate_one_hop};
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::graph::build_graph;

    #[test]
    fn singleton_neighbor_matches_one_hop() {
        let g = build_graph(vec![(0, 1, vec![0])], 2, 1).unwrap();
        let rel = RelationEmbeddingTable::new(
            FeatureMatrix::from_data(1, 2, vec![0.5, -2.0]).unwrap(),
            1,
        )
        .unwrap();
        let x = FeatureMatrix::from_data(2, 2, vec![4.0, 3.0, 0.0, 0.0]).unwrap();
        let cfg = ApmConfig {
            num_hops: 1,
            ..ApmConfig::default()
        };
        let oracle = dense_oracle(&g, &rel, &x, &cfg).unwrap();
        let hop = propagate_one_hop(&g, &rel, &x, &cfg).unwrap();
        assert_eq!(oracle.hop(1), &hop);
    }

    #[test]
    fn agrees_with_sparse_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for case in 0..10 {
            let g = random_graph(&mut rng, 30, 5, 3.0, 0.2);
            let rel = random_rel_table(&mut rng, 5, 8);
            let x = random_features(&mut rng, 30, 8);
            let cfg = ApmConfig {
                num_hops: 3,
                ..ApmConfig::default()
            };
            let sparse = propagate(&g, &rel, &x, &cfg).unwrap();
            let dense = dense_oracle(&g, &rel, &x, &cfg).unwrap();
            for k in 0..=3 {
                let diff = max_abs_diff(sparse.hop(k), dense.hop(k));
                assert!(diff <= 1e-5, "case {case} hop {k}: max |Δ| = {diff}");
            }
        }
    }

    #[test]
    fn permuted_labels_permute_output_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(59);
        let n: u64 = 20;
        let g = random_graph(&mut rng, n, 4, 2.5, 0.2);
        let rel = random_rel_table(&mut rng, 4, 6);
        let x = random_features(&mut rng, n as usize, 6);
        let cfg = ApmConfig {
            num_hops: 2,
            ..ApmConfig::default()
        };

        let mut perm: Vec<u64> = (0..n).collect();
        perm.shuffle(&mut rng);
        let edges: Vec<_> = g
            .iter_edges()
            .map(|(s, d, t)| (perm[s as usize], perm[d as usize], t.to_vec()))
            .collect();
        let pg = build_graph(edges, n, 4).unwrap();
        let mut px = FeatureMatrix::zeros(n as usize, 6);
        for v in 0..n as usize {
            px.row_mut(perm[v] as usize).copy_from_slice(x.row(v));
        }

        let base = dense_oracle(&g, &rel, &x, &cfg).unwrap();
        let permuted = dense_oracle(&pg, &rel, &px, &cfg).unwrap();
        for k in 0..=2 {
            for v in 0..n as usize {
                let a = base.hop(k).row(v);
                let b = permuted.hop(k).row(perm[v] as usize);
                for j in 0..6 {
                    assert!(
                        (a[j] as f64 - b[j] as f64).abs() <= 1e-5,
                        "hop {k} node {v} component {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn size_guard() {
        let g = build_graph(vec![], 300, 1).unwrap();
        let rel = RelationEmbeddingTable::new(FeatureMatrix::zeros(1, 2), 1).unwrap();
        let x = FeatureMatrix::zeros(300, 2);
        assert!(matches!(
            dense_oracle(&g, &rel, &x, &ApmConfig::default()),
            Err(Error::SizeGuard(_))
        ));
    }
}
