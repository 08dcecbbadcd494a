//! Anisotropy propagation: parameter-free edge-aware multi-hop smoothing.
//!
//! One hop turns node features `c_k` into `c_{k+1}`: every in-edge (u, v)
//! carries a message `e ⊙ c_k[u]` where `e` is the embedding of the edge's
//! type list, each destination softmax-weights its incoming messages by
//! their L2 norms, and the weighted messages are summed. Iterating K times
//! yields the propagation stack `[X, C^1, ..., C^K]` consumed by the
//! post-classifiers. Nothing here is learned, so the whole stack can be
//! precomputed once on CPU and reused across model runs.
//!
//! Determinism contract: per destination, neighbors are visited in
//! ascending source order and sums are accumulated in f64 in that order,
//! so results are bitwise identical regardless of worker count or
//! destination blocking. Storage stays f32.

mod chunked;
mod oracle;

pub use chunked::{expected_manifest, propagate_chunked, DiskStack, StackManifest};
pub use oracle::dense_oracle;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::io::MappedFeatures;
use crate::matrix::{FeatureMatrix, RelationEmbeddingTable};

/// What a destination with no in-edges receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IsolatedPolicy {
    /// Zero vector (softmax over an empty set is undefined).
    Zero,
    /// Previous-hop features carried through unchanged.
    Carry,
}

/// How the embeddings of a multi-typed edge are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypeCombine {
    /// Mean keeps message magnitude independent of type multiplicity.
    Mean,
    Sum,
}

impl std::str::FromStr for IsolatedPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(IsolatedPolicy::Zero),
            "carry" => Ok(IsolatedPolicy::Carry),
            other => Err(Error::InvalidInput(format!(
                "unknown isolated policy {other:?} (zero|carry)"
            ))),
        }
    }
}

impl std::str::FromStr for TypeCombine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(TypeCombine::Mean),
            "sum" => Ok(TypeCombine::Sum),
            other => Err(Error::InvalidInput(format!(
                "unknown type combine {other:?} (mean|sum)"
            ))),
        }
    }
}

impl std::fmt::Display for IsolatedPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IsolatedPolicy::Zero => "zero",
            IsolatedPolicy::Carry => "carry",
        })
    }
}

impl std::fmt::Display for TypeCombine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TypeCombine::Mean => "mean",
            TypeCombine::Sum => "sum",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ApmConfig {
    /// K, the number of propagation hops. Must be at least 1.
    pub num_hops: usize,
    pub isolated_policy: IsolatedPolicy,
    pub type_combine: TypeCombine,
    /// Augment the graph with reversed edges before propagating.
    pub add_reverse: bool,
}

impl Default for ApmConfig {
    fn default() -> Self {
        ApmConfig {
            num_hops: 3,
            isolated_policy: IsolatedPolicy::Zero,
            type_combine: TypeCombine::Mean,
            add_reverse: false,
        }
    }
}

impl ApmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_hops < 1 {
            return Err(Error::InvalidInput("num_hops must be >= 1".into()));
        }
        Ok(())
    }
}

/// The hop sequence `[C^0 = X, C^1, ..., C^K]`, all n x d and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationStack {
    hops: Vec<FeatureMatrix>,
}

impl PropagationStack {
    pub fn new(hops: Vec<FeatureMatrix>) -> Result<Self> {
        let first = hops.first().ok_or_else(|| {
            Error::InvalidInput("a propagation stack needs at least C^0".into())
        })?;
        let (rows, dim) = (first.rows(), first.dim());
        for hop in &hops {
            if hop.rows() != rows || hop.dim() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "hop of {} x {} in a {} x {} stack",
                    hop.rows(),
                    hop.dim(),
                    rows,
                    dim
                )));
            }
            hop.check_finite()?;
        }
        Ok(PropagationStack { hops })
    }

    /// Number of propagation hops K (stack length is K+1).
    pub fn num_hops(&self) -> usize {
        self.hops.len() - 1
    }

    pub fn hop(&self, k: usize) -> &FeatureMatrix {
        &self.hops[k]
    }

    pub fn hops(&self) -> &[FeatureMatrix] {
        &self.hops
    }

    pub fn rows(&self) -> usize {
        self.hops[0].rows()
    }

    pub fn dim(&self) -> usize {
        self.hops[0].dim()
    }
}

/// Row access for the previous hop; lets the kernel read either an
/// in-memory matrix or a memory-mapped hop file.
pub trait HopRows: Sync {
    fn rows(&self) -> usize;
    fn dim(&self) -> usize;
    fn row(&self, i: usize) -> &[f32];
}

impl HopRows for FeatureMatrix {
    fn rows(&self) -> usize {
        FeatureMatrix::rows(self)
    }
    fn dim(&self) -> usize {
        FeatureMatrix::dim(self)
    }
    fn row(&self, i: usize) -> &[f32] {
        FeatureMatrix::row(self, i)
    }
}

impl HopRows for MappedFeatures {
    fn rows(&self) -> usize {
        MappedFeatures::rows(self)
    }
    fn dim(&self) -> usize {
        MappedFeatures::dim(self)
    }
    fn row(&self, i: usize) -> &[f32] {
        MappedFeatures::row(self, i)
    }
}

/// Combined embedding of an edge's type list: mean (default) or sum of the
/// relation table rows, accumulated in f64.
pub fn edge_embedding(
    rel_table: &RelationEmbeddingTable,
    types: &[u32],
    combine: TypeCombine,
) -> Result<Vec<f64>> {
    if types.is_empty() {
        return Err(Error::InvalidInput(
            "edge embedding of an empty type list".into(),
        ));
    }
    let mut out = vec![0.0f64; rel_table.dim()];
    edge_embedding_into(rel_table, types, combine, &mut out)?;
    Ok(out)
}

fn edge_embedding_into(
    rel_table: &RelationEmbeddingTable,
    types: &[u32],
    combine: TypeCombine,
    out: &mut [f64],
) -> Result<()> {
    out.fill(0.0);
    for &t in types {
        if t >= rel_table.type_count() {
            return Err(Error::TypeOutOfRange {
                index: t,
                bound: rel_table.type_count(),
            });
        }
        for (o, r) in out.iter_mut().zip(rel_table.row(t)) {
            *o += *r as f64;
        }
    }
    if let TypeCombine::Mean = combine {
        let inv = 1.0 / types.len() as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
    }
    Ok(())
}

/// Max-subtracted softmax, in place. `scores` must be non-empty.
fn softmax_inplace(scores: &mut [f64]) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

/// Per-worker scratch; sized once per hop, reused across destinations.
struct RowScratch {
    edge_emb: Vec<f64>,
    scores: Vec<f64>,
    acc: Vec<f64>,
}

impl RowScratch {
    fn new(dim: usize) -> Self {
        RowScratch {
            edge_emb: vec![0.0; dim],
            scores: Vec::new(),
            acc: vec![0.0; dim],
        }
    }
}

/// Computes one destination row of the next hop.
///
/// Two passes over the in-edges: the first collects L2-norm scores, the
/// second recomputes each message and accumulates it under its softmax
/// weight. Recomputing keeps per-destination memory at O(in_degree + d)
/// instead of O(in_degree * d), which matters for hub nodes.
fn propagate_row(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    prev: &impl HopRows,
    cfg: &ApmConfig,
    v: u64,
    scratch: &mut RowScratch,
    out_row: &mut [f32],
) -> Result<()> {
    let indeg = g.in_degree(v) as usize;
    if indeg == 0 {
        match cfg.isolated_policy {
            IsolatedPolicy::Zero => out_row.fill(0.0),
            IsolatedPolicy::Carry => out_row.copy_from_slice(prev.row(v as usize)),
        }
        return Ok(());
    }

    scratch.scores.clear();
    for (u, types) in g.in_neighbors(v)? {
        edge_embedding_into(rel_table, types, cfg.type_combine, &mut scratch.edge_emb)?;
        let src = prev.row(u as usize);
        let mut sq = 0.0f64;
        for (e, c) in scratch.edge_emb.iter().zip(src) {
            let m = e * *c as f64;
            sq += m * m;
        }
        scratch.scores.push(sq.sqrt());
    }
    softmax_inplace(&mut scratch.scores);

    scratch.acc.fill(0.0);
    for ((u, types), w) in g.in_neighbors(v)?.zip(&scratch.scores) {
        edge_embedding_into(rel_table, types, cfg.type_combine, &mut scratch.edge_emb)?;
        let src = prev.row(u as usize);
        for ((a, e), c) in scratch.acc.iter_mut().zip(&scratch.edge_emb).zip(src) {
            *a += w * (e * *c as f64);
        }
    }
    for (o, a) in out_row.iter_mut().zip(&scratch.acc) {
        *o = *a as f32;
    }
    Ok(())
}

/// The softmax weights destination `v` applies to its in-neighbors,
/// as (source, weight) pairs in ascending source order. Empty for
/// isolated destinations.
pub fn destination_weights(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    prev: &FeatureMatrix,
    cfg: &ApmConfig,
    v: u64,
) -> Result<Vec<(u64, f64)>> {
    check_dims(g, rel_table, prev)?;
    if g.in_degree(v) == 0 {
        return Ok(Vec::new());
    }
    let mut edge_emb = vec![0.0f64; prev.dim()];
    let mut scores = Vec::new();
    let mut sources = Vec::new();
    for (u, types) in g.in_neighbors(v)? {
        edge_embedding_into(rel_table, types, cfg.type_combine, &mut edge_emb)?;
        let src = prev.row(u as usize);
        let mut sq = 0.0f64;
        for (e, c) in edge_emb.iter().zip(src) {
            let m = e * *c as f64;
            sq += m * m;
        }
        scores.push(sq.sqrt());
        sources.push(u);
    }
    softmax_inplace(&mut scores);
    Ok(sources.into_iter().zip(scores).collect())
}

fn check_dims(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    c_k: &impl HopRows,
) -> Result<()> {
    if c_k.rows() as u64 != g.node_count() {
        return Err(Error::ShapeMismatch(format!(
            "feature rows {} != node count {}",
            c_k.rows(),
            g.node_count()
        )));
    }
    if c_k.dim() != rel_table.dim() {
        return Err(Error::DimMismatch {
            expected: rel_table.dim(),
            got: c_k.dim(),
        });
    }
    Ok(())
}

/// Writes the next hop for destinations `range` into `out_rows`, which
/// holds exactly that block of rows. Drives both the in-memory and the
/// chunked paths, so the two stay bitwise identical by construction.
pub(crate) fn propagate_block(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    prev: &impl HopRows,
    cfg: &ApmConfig,
    range: std::ops::Range<u64>,
    out_rows: &mut [f32],
) -> Result<()> {
    let dim = prev.dim();
    debug_assert_eq!(out_rows.len(), (range.end - range.start) as usize * dim);
    // Rows are independent; split the block across workers.
    out_rows
        .par_chunks_mut(dim)
        .enumerate()
        .try_for_each_init(
            || RowScratch::new(dim),
            |scratch, (i, out_row)| {
                propagate_row(
                    g,
                    rel_table,
                    prev,
                    cfg,
                    range.start + i as u64,
                    scratch,
                    out_row,
                )
            },
        )
}

/// One propagation hop: `c_{k+1}` from `c_k`.
pub fn propagate_one_hop(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    c_k: &FeatureMatrix,
    cfg: &ApmConfig,
) -> Result<FeatureMatrix> {
    check_dims(g, rel_table, c_k)?;
    c_k.check_finite()?;
    let n = g.node_count() as usize;
    let dim = c_k.dim();
    let mut next = FeatureMatrix::zeros(n, dim);
    propagate_block(g, rel_table, c_k, cfg, 0..n as u64, next.data_mut())?;
    next.check_finite()?;
    Ok(next)
}

/// Runs K hops and returns the full stack `[X, C^1, ..., C^K]`.
///
/// `hops[0]` is a bitwise copy of `x`. Results are deterministic for fixed
/// inputs regardless of the rayon pool driving the call.
pub fn propagate(
    g: &HeteroGraph,
    rel_table: &RelationEmbeddingTable,
    x: &FeatureMatrix,
    cfg: &ApmConfig,
) -> Result<PropagationStack> {
    cfg.validate()?;
    check_dims(g, rel_table, x)?;
    let graph;
    let g = if cfg.add_reverse {
        graph = g.add_reverse_edges();
        &graph
    } else {
        g
    };
    let mut hops = Vec::with_capacity(cfg.num_hops + 1);
    hops.push(x.clone());
    for _ in 0..cfg.num_hops {
        let next = propagate_one_hop(g, rel_table, hops.last().unwrap(), cfg)?;
        hops.push(next);
    }
    PropagationStack::new(hops)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    use crate::graph::build_graph;

    fn rel_from_rows(rows: &[Vec<f32>]) -> RelationEmbeddingTable {
        let m = FeatureMatrix::from_rows(rows).unwrap();
        let count = m.rows() as u32;
        RelationEmbeddingTable::new(m, count).unwrap()
    }

    #[test]
    fn edge_embedding_single_type_is_row() {
        let rel = rel_from_rows(&[vec![0.5, -1.5], vec![2.0, 3.0]]);
        let e = edge_embedding(&rel, &[1], TypeCombine::Mean).unwrap();
        assert_eq!(e, vec![2.0, 3.0]);
    }

    #[test]
    fn edge_embedding_mean_of_two() {
        let rel = rel_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let e = edge_embedding(&rel, &[0, 1], TypeCombine::Mean).unwrap();
        assert_eq!(e, vec![0.5, 0.5]);
        let s = edge_embedding(&rel, &[0, 1], TypeCombine::Sum).unwrap();
        assert_eq!(s, vec![1.0, 1.0]);
    }

    #[test]
    fn edge_embedding_matches_scalar_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rel = random_rel_table(&mut rng, 5, 7);
        for _ in 0..50 {
            let k = rng.gen_range(1..=4usize);
            let types: Vec<u32> = (0..k).map(|_| rng.gen_range(0..5)).collect();
            for combine in [TypeCombine::Mean, TypeCombine::Sum] {
                let got = edge_embedding(&rel, &types, combine).unwrap();
                // Scalar-loop oracle: one component at a time.
                for j in 0..7 {
                    let mut acc = 0.0f64;
                    for &t in &types {
                        acc += rel.row(t)[j] as f64;
                    }
                    if let TypeCombine::Mean = combine {
                        acc *= 1.0 / types.len() as f64;
                    }
                    assert!((got[j] - acc).abs() <= 1e-12);
                }
            }
        }
        assert!(edge_embedding(&rel, &[9], TypeCombine::Mean).is_err());
        assert!(edge_embedding(&rel, &[], TypeCombine::Mean).is_err());
    }

    #[test]
    fn one_hop_singleton_neighbor_is_modulated_source() {
        // Softmax over a single score is 1, so the hop reduces to e ⊙ c_k[u].
        let g = build_graph(vec![(0, 1, vec![0, 1])], 2, 2).unwrap();
        let rel = rel_from_rows(&[vec![1.0, 0.25, -3.0], vec![0.5, 0.75, 1.0]]);
        let c0 = FeatureMatrix::from_data(2, 3, vec![1.5, -2.0, 0.125, 9.0, 9.0, 9.0]).unwrap();
        let cfg = ApmConfig::default();
        let next = propagate_one_hop(&g, &rel, &c0, &cfg).unwrap();
        let e = edge_embedding(&rel, &[0, 1], TypeCombine::Mean).unwrap();
        for j in 0..3 {
            let expected = (e[j] * c0.row(0)[j] as f64) as f32;
            assert_eq!(next.row(1)[j], expected, "component {j}");
        }
    }

    #[test]
    fn one_hop_isolated_policies() {
        let g = build_graph(vec![(0, 1, vec![0])], 3, 1).unwrap();
        let rel = rel_from_rows(&[vec![1.0, 1.0]]);
        let c0 =
            FeatureMatrix::from_data(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let zero = ApmConfig {
            isolated_policy: IsolatedPolicy::Zero,
            ..ApmConfig::default()
        };
        let next = propagate_one_hop(&g, &rel, &c0, &zero).unwrap();
        assert_eq!(next.row(2), &[0.0, 0.0]);
        let carry = ApmConfig {
            isolated_policy: IsolatedPolicy::Carry,
            ..ApmConfig::default()
        };
        let next = propagate_one_hop(&g, &rel, &c0, &carry).unwrap();
        assert_eq!(next.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn one_hop_two_neighbor_worked_example() {
        // Messages [2,0] (norm 2) and [0,3] (norm 3); weights softmax(2,3).
        let g = build_graph(vec![(0, 2, vec![0]), (1, 2, vec![1])], 3, 2).unwrap();
        let rel = rel_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let c0 = FeatureMatrix::from_data(3, 2, vec![2.0, 0.0, 0.0, 3.0, 0.0, 0.0]).unwrap();
        let cfg = ApmConfig::default();
        let next = propagate_one_hop(&g, &rel, &c0, &cfg).unwrap();
        let w0 = (2.0f64).exp() / ((2.0f64).exp() + (3.0f64).exp());
        let w1 = (3.0f64).exp() / ((2.0f64).exp() + (3.0f64).exp());
        assert!((next.row(2)[0] as f64 - w0 * 2.0).abs() < 1e-6);
        assert!((next.row(2)[1] as f64 - w1 * 3.0).abs() < 1e-6);
        let weights = destination_weights(&g, &rel, &c0, &cfg, 2).unwrap();
        assert_eq!(weights.len(), 2);
        assert!((weights[0].1 - w0).abs() < 1e-12);
        assert!((weights[1].1 - w1).abs() < 1e-12);
    }

    #[test]
    fn propagate_k1_is_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = random_graph(&mut rng, 12, 3, 2.0, 0.2);
        let rel = random_rel_table(&mut rng, 3, 4);
        let x = random_features(&mut rng, 12, 4);
        let cfg = ApmConfig {
            num_hops: 1,
            ..ApmConfig::default()
        };
        let stack = propagate(&g, &rel, &x, &cfg).unwrap();
        assert_eq!(stack.num_hops(), 1);
        assert_eq!(stack.hop(0), &x);
        assert_eq!(stack.hop(1), &propagate_one_hop(&g, &rel, &x, &cfg).unwrap());
    }

    #[test]
    fn propagate_all_isolated_zero_policy() {
        let g = build_graph(vec![], 5, 1).unwrap();
        let rel = rel_from_rows(&[vec![1.0, 1.0, 1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let x = random_features(&mut rng, 5, 3);
        let cfg = ApmConfig {
            num_hops: 2,
            ..ApmConfig::default()
        };
        let stack = propagate(&g, &rel, &x, &cfg).unwrap();
        assert!(stack.hop(1).data().iter().all(|&v| v == 0.0));
        assert!(stack.hop(2).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let g = random_graph(&mut rng, 30, 4, 3.0, 0.2);
        let rel = random_rel_table(&mut rng, 4, 6);
        let x = random_features(&mut rng, 30, 6);
        let cfg = ApmConfig::default();
        for v in 0..30 {
            let w = destination_weights(&g, &rel, &x, &cfg, v).unwrap();
            if g.in_degree(v) == 0 {
                assert!(w.is_empty());
            } else {
                let sum: f64 = w.iter().map(|(_, w)| w).sum();
                assert!((sum - 1.0).abs() <= 1e-6, "node {v} weight sum {sum}");
            }
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let g = random_graph(&mut rng, 60, 5, 4.0, 0.15);
        let rel = random_rel_table(&mut rng, 5, 8);
        let x = random_features(&mut rng, 60, 8);
        let cfg = ApmConfig::default();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| propagate(&g, &rel, &x, &cfg).unwrap())
        };
        let one = run(1);
        for threads in [2, 8] {
            let other = run(threads);
            for k in 0..=cfg.num_hops {
                assert_eq!(
                    one.hop(k).data(),
                    other.hop(k).data(),
                    "hop {k} differs at {threads} workers"
                );
            }
        }
    }

    #[test]
    fn add_reverse_flag_uses_augmented_graph() {
        let g = build_graph(vec![(0, 1, vec![0])], 2, 1).unwrap();
        let rel = rel_from_rows(&[vec![1.0]]);
        let x = FeatureMatrix::from_data(2, 1, vec![5.0, 7.0]).unwrap();
        let cfg = ApmConfig {
            num_hops: 1,
            add_reverse: true,
            ..ApmConfig::default()
        };
        let stack = propagate(&g, &rel, &x, &cfg).unwrap();
        // With the reverse edge present node 0 receives node 1's features.
        assert_eq!(stack.hop(1).row(0), &[7.0]);
        assert_eq!(stack.hop(1).row(1), &[5.0]);
    }

    #[test]
    fn rejects_bad_shapes_and_k0() {
        let g = build_graph(vec![(0, 1, vec![0])], 2, 1).unwrap();
        let rel = rel_from_rows(&[vec![1.0, 2.0]]);
        let x = FeatureMatrix::zeros(2, 3);
        assert!(propagate_one_hop(&g, &rel, &x, &ApmConfig::default()).is_err());
        let x = FeatureMatrix::zeros(1, 2);
        assert!(propagate_one_hop(&g, &rel, &x, &ApmConfig::default()).is_err());
        let x = FeatureMatrix::zeros(2, 2);
        let cfg = ApmConfig {
            num_hops: 0,
            ..ApmConfig::default()
        };
        assert!(propagate(&g, &rel, &x, &cfg).is_err());
    }
}
