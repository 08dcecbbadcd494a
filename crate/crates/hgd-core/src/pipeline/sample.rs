//! Snowball subsampling and train/val/test splits.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WalkParams {
    /// Number of walk seeds S; the high-degree fraction of them are the
    /// top nodes by total degree, the rest are uniform draws.
    pub num_seeds: usize,
    /// Probability per step of teleporting back to a seed.
    pub restart_prob: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            num_seeds: 16,
            restart_prob: 0.15,
        }
    }
}

/// Output of a snowball run: the sampled nodes and the induced subgraph
/// under a dense remap.
#[derive(Debug)]
pub struct SnowballSample {
    /// Sampled original ids, ascending; index is the new id.
    pub old_ids: Vec<u64>,
    /// Induced subgraph over the sample with remapped ids.
    pub graph: HeteroGraph,
    /// Nodes added by uniform fill because the walk stopped finding new
    /// ones within its step budget. Zero in the normal case.
    pub uniform_filled: usize,
}

impl SnowballSample {
    pub fn new_id(&self, old: u64) -> Option<u64> {
        self.old_ids.binary_search(&old).ok().map(|i| i as u64)
    }

    /// `new_id<TAB>old_id` rows.
    pub fn write_remap_tsv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |out| {
            for (new_id, old_id) in self.old_ids.iter().enumerate() {
                writeln!(out, "{new_id}\t{old_id}").map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        })
    }
}

pub fn read_remap_tsv(path: &Path) -> Result<Vec<u64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut old_ids = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::Malformed {
            format: "remap.tsv",
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let (new_id, old_id) = line.split_once('\t').ok_or_else(|| malformed("missing tab"))?;
        let new_id: usize = new_id.parse().map_err(|_| malformed("bad new id"))?;
        if new_id != old_ids.len() {
            return Err(malformed("non-contiguous new ids"));
        }
        old_ids.push(old_id.parse().map_err(|_| malformed("bad old id"))?);
    }
    Ok(old_ids)
}

/// Random-walk snowball sample of exactly `target_n` nodes.
///
/// Seeds mix the highest-total-degree nodes with uniform draws; walks
/// traverse edges as undirected, restart to their seeds with
/// `restart_prob`, and jump to fresh uniform nodes when stuck. First
/// visits are recorded until `target_n` unique nodes are collected. If the
/// walk exhausts its step budget first (disconnected leftovers), the
/// remainder is filled uniformly and reported in `uniform_filled`.
pub fn snowball_sample(
    g: &HeteroGraph,
    target_n: u64,
    high_degree_fraction: f64,
    walk: &WalkParams,
    seed: u64,
) -> Result<SnowballSample> {
    let n = g.node_count();
    if target_n > n {
        return Err(Error::InvalidInput(format!(
            "target_n {target_n} exceeds node count {n}"
        )));
    }
    if !(0.0..=1.0).contains(&high_degree_fraction) {
        return Err(Error::InvalidInput(
            "high_degree_fraction must be in [0, 1]".into(),
        ));
    }
    if target_n == 0 {
        return Err(Error::InvalidInput("target_n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Transient undirected adjacency; the core graph only stores in-CSR.
    let mut adjacency: Vec<Vec<u64>> = vec![Vec::new(); n as usize];
    for (src, dst, _) in g.iter_edges() {
        adjacency[src as usize].push(dst);
        adjacency[dst as usize].push(src);
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }

    // Seed selection: top by total degree, ties broken by id, then
    // uniform draws from the remainder.
    let num_seeds = walk.num_seeds.clamp(1, n as usize);
    let high_count = ((num_seeds as f64) * high_degree_fraction).round() as usize;
    let high_count = high_count.min(num_seeds);
    let mut by_degree: Vec<u64> = (0..n).collect();
    by_degree.sort_by_key(|&v| (std::cmp::Reverse(g.total_degree(v)), v));
    let mut seeds: Vec<u64> = by_degree[..high_count].to_vec();
    let chosen: HashSet<u64> = seeds.iter().copied().collect();
    let mut rest: Vec<u64> = (0..n).filter(|v| !chosen.contains(v)).collect();
    let uniform_count = (num_seeds - high_count).min(rest.len());
    for _ in 0..uniform_count {
        let pick = rng.gen_range(0..rest.len());
        seeds.push(rest.swap_remove(pick));
    }

    let mut visited = vec![false; n as usize];
    let mut collected: Vec<u64> = Vec::with_capacity(target_n as usize);
    let visit = |v: u64, collected: &mut Vec<u64>, visited: &mut Vec<bool>| {
        if !visited[v as usize] {
            visited[v as usize] = true;
            collected.push(v);
        }
    };

    let mut seed_cursor = 0usize;
    let mut cursor = seeds[0];
    visit(cursor, &mut collected, &mut visited);
    let step_budget = 200u64.saturating_mul(target_n).max(10_000);
    let mut steps = 0u64;
    while (collected.len() as u64) < target_n && steps < step_budget {
        steps += 1;
        let neighbors = &adjacency[cursor as usize];
        cursor = if neighbors.is_empty() {
            // Dead end: restart from a fresh uniform node.
            rng.gen_range(0..n)
        } else if rng.gen::<f64>() < walk.restart_prob {
            seed_cursor = (seed_cursor + 1) % seeds.len();
            seeds[seed_cursor]
        } else {
            neighbors[rng.gen_range(0..neighbors.len())]
        };
        visit(cursor, &mut collected, &mut visited);
    }

    // Budget exhausted with nodes still missing: uniform fill, flagged.
    let mut uniform_filled = 0usize;
    if (collected.len() as u64) < target_n {
        let mut remaining: Vec<u64> = (0..n).filter(|&v| !visited[v as usize]).collect();
        while (collected.len() as u64) < target_n {
            let pick = rng.gen_range(0..remaining.len());
            let v = remaining.swap_remove(pick);
            visit(v, &mut collected, &mut visited);
            uniform_filled += 1;
        }
    }

    let mut old_ids = collected;
    old_ids.sort_unstable();
    let new_id = |old: u64| old_ids.binary_search(&old).unwrap() as u64;
    let mut edges = Vec::new();
    for (src, dst, types) in g.iter_edges() {
        if visited[src as usize] && visited[dst as usize] {
            edges.push((new_id(src), new_id(dst), types.to_vec()));
        }
    }
    let graph = build_graph(edges, target_n, g.edge_type_count())?;
    Ok(SnowballSample {
        old_ids,
        graph,
        uniform_filled,
    })
}

/// Disjoint train/val/test node sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub val: Vec<u64>,
    pub test: Vec<u64>,
}

impl Split {
    /// `node_id<TAB>train|val|test` rows.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |out| {
            for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)]
            {
                for id in ids {
                    writeln!(out, "{id}\t{name}").map_err(|e| Error::io(path, e))?;
                }
            }
            Ok(())
        })
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::Malformed {
                format: "split.tsv",
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let (id, part) = line.split_once('\t').ok_or_else(|| malformed("missing tab"))?;
            let id: u64 = id.parse().map_err(|_| malformed("bad node id"))?;
            match part {
                "train" => split.train.push(id),
                "val" => split.val.push(id),
                "test" => split.test.push(id),
                _ => return Err(malformed("unknown part")),
            }
        }
        Ok(split)
    }
}

/// Uniform shuffled split of `nodes` into parts of the given ratios.
///
/// Sizes use largest-remainder rounding, so each part is within one node
/// of its exact share and the parts cover the input exactly.
pub fn split(nodes: &[u64], ratios: (f64, f64, f64), seed: u64) -> Result<Split> {
    let total = ratios.0 + ratios.1 + ratios.2;
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "split ratios sum to {total}, expected 1"
        )));
    }
    if ratios.0 < 0.0 || ratios.1 < 0.0 || ratios.2 < 0.0 {
        return Err(Error::InvalidInput("split ratios must be >= 0".into()));
    }
    let mut shuffled = nodes.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let shares = [ratios.0, ratios.1, ratios.2].map(|r| r * n as f64);
    let mut counts = shares.map(|s| s.floor() as usize);
    let mut leftover = n - counts.iter().sum::<usize>();
    // Hand leftovers to the largest fractional parts, earlier part wins ties.
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = shares[a] - shares[a].floor();
        let fb = shares[b] - shares[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &idx in &order {
        if leftover == 0 {
            break;
        }
        counts[idx] += 1;
        leftover -= 1;
    }

    let train = shuffled[..counts[0]].to_vec();
    let val = shuffled[counts[0]..counts[0] + counts[1]].to_vec();
    let test = shuffled[counts[0] + counts[1]..].to_vec();
    Ok(Split { train, val, test })
}
