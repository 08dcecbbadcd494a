//! Label space construction: instance-of harvesting, k-means clustering
//! of parent embeddings into Q high-level classes, and node annotation.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::labels::LabelMatrix;
use crate::matrix::FeatureMatrix;

use super::dump::{ClaimTarget, EntityRecord};

/// Parent-entity id -> high-level class id, total over harvested parents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMap {
    map: BTreeMap<String, u32>,
    class_count: u32,
}

impl AnnotationMap {
    pub fn new(map: BTreeMap<String, u32>, class_count: u32) -> Result<Self> {
        for (parent, &class) in &map {
            if class >= class_count {
                return Err(Error::ClassOutOfRange {
                    index: class,
                    bound: class_count,
                });
            }
            if parent.is_empty() {
                return Err(Error::InvalidInput("empty parent id".into()));
            }
        }
        Ok(AnnotationMap { map, class_count })
    }

    pub fn class_of(&self, parent: &str) -> Option<u32> {
        self.map.get(parent).copied()
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u32)> {
        self.map.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// `parent_id<TAB>class_id` rows.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        write_atomic(path, |out| {
            writeln!(out, "# classes\t{}", self.class_count).map_err(|e| Error::io(path, e))?;
            for (parent, class) in self.iter() {
                writeln!(out, "{parent}\t{class}").map_err(|e| Error::io(path, e))?;
            }
            Ok(())
        })
    }

    pub fn read_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = BTreeMap::new();
        let mut class_count = 0u32;
        for (lineno, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let malformed = |reason: &str| Error::Malformed {
                format: "annotation_map.tsv",
                line: lineno + 1,
                reason: reason.to_string(),
            };
            if let Some(rest) = line.strip_prefix("# classes\t") {
                class_count = rest.parse().map_err(|_| malformed("bad class count"))?;
                continue;
            }
            let (parent, class) = line.split_once('\t').ok_or_else(|| malformed("missing tab"))?;
            map.insert(
                parent.to_string(),
                class.parse().map_err(|_| malformed("bad class id"))?,
            );
        }
        AnnotationMap::new(map, class_count)
    }
}

/// Collects each record's instance-of parents and their deduplicated
/// union. Records without the property get empty lists.
pub fn harvest_labels(
    records: &[EntityRecord],
    instance_of_property: &str,
) -> (BTreeSet<String>, Vec<Vec<String>>) {
    let mut all_parents = BTreeSet::new();
    let mut per_entity = Vec::with_capacity(records.len());
    for record in records {
        let mut parents = Vec::new();
        for claim in &record.claims {
            if claim.property != instance_of_property {
                continue;
            }
            if let ClaimTarget::Entity(target) = &claim.target {
                parents.push(target.clone());
                all_parents.insert(target.clone());
            }
        }
        parents.sort_unstable();
        parents.dedup();
        per_entity.push(parents);
    }
    (all_parents, per_entity)
}

/// Lloyd k-means over embedding rows with k-means++ seeding.
/// Returns per-row cluster assignments; deterministic for a fixed seed.
pub fn kmeans(
    embeddings: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iters: usize,
) -> Result<Vec<u32>> {
    let n = embeddings.rows();
    let d = embeddings.dim();
    if n < k {
        return Err(Error::InvalidInput(format!(
            "cannot form {k} clusters from {n} rows"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    if max_iters == 0 {
        return Err(Error::InvalidInput("max_iters must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let dist_sq = |row: &[f32], centroid: &[f64]| -> f64 {
        row.iter()
            .zip(centroid)
            .map(|(x, c)| {
                let diff = *x as f64 - c;
                diff * diff
            })
            .sum()
    };

    // k-means++ seeding: first centroid uniform, the rest sampled with
    // probability proportional to squared distance from the chosen set.
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let first = rng.gen_range(0..n);
    chosen[first] = true;
    centroids.push(embeddings.row(first).iter().map(|&v| v as f64).collect());
    let mut best_dist: Vec<f64> = (0..n)
        .map(|i| dist_sq(embeddings.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = best_dist
            .iter()
            .enumerate()
            .filter(|(i, _)| !chosen[*i])
            .map(|(_, d)| *d)
            .sum();
        let pick = if total > 0.0 {
            let mut ticket = rng.gen::<f64>() * total;
            let mut pick = None;
            for i in 0..n {
                if chosen[i] {
                    continue;
                }
                ticket -= best_dist[i];
                if ticket <= 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // Floating-point slack can leave the ticket positive.
            pick.unwrap_or_else(|| (0..n).rfind(|&i| !chosen[i]).unwrap())
        } else {
            // All remaining rows coincide with a centroid; take the first
            // unchosen row so exactly k centroids always exist.
            (0..n).find(|&i| !chosen[i]).unwrap()
        };
        chosen[pick] = true;
        let centroid: Vec<f64> = embeddings.row(pick).iter().map(|&v| v as f64).collect();
        for i in 0..n {
            best_dist[i] = best_dist[i].min(dist_sq(embeddings.row(i), &centroid));
        }
        centroids.push(centroid);
    }

    // Lloyd iterations until the assignment reaches a fixpoint.
    let mut assignment = vec![0u32; n];
    for _ in 0..max_iters {
        let mut changed = false;
        for i in 0..n {
            let row = embeddings.row(i);
            let mut best = (f64::INFINITY, 0u32);
            for (c, centroid) in centroids.iter().enumerate() {
                let d2 = dist_sq(row, centroid);
                if d2 < best.0 {
                    best = (d2, c as u32);
                }
            }
            if assignment[i] != best.1 {
                assignment[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![vec![0.0f64; d]; k];
        for i in 0..n {
            let c = assignment[i] as usize;
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(embeddings.row(i)) {
                *s += *v as f64;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue; // empty cluster keeps its centroid
            }
            for (centroid, sum) in centroids[c].iter_mut().zip(&sums[c]) {
                *centroid = sum / counts[c] as f64;
            }
        }
    }
    Ok(assignment)
}

/// Sum of squared distances from rows to their assigned centroids, where
/// centroids are the means implied by `assignment`.
pub fn kmeans_objective(embeddings: &FeatureMatrix, assignment: &[u32], k: usize) -> f64 {
    let d = embeddings.dim();
    let mut counts = vec![0usize; k];
    let mut sums = vec![vec![0.0f64; d]; k];
    for (i, &c) in assignment.iter().enumerate() {
        counts[c as usize] += 1;
        for (s, v) in sums[c as usize].iter_mut().zip(embeddings.row(i)) {
            *s += *v as f64;
        }
    }
    let mut objective = 0.0;
    for (i, &c) in assignment.iter().enumerate() {
        let count = counts[c as usize].max(1) as f64;
        for (s, v) in sums[c as usize].iter().zip(embeddings.row(i)) {
            let diff = *v as f64 - s / count;
            objective += diff * diff;
        }
    }
    objective
}

/// Clusters parent embeddings into `q` high-level classes.
///
/// `parents[i]` names the entity embedded at row i. The operating point
/// this was built for is tens of thousands of parents collapsing into a
/// couple thousand classes.
pub fn cluster_labels(
    parents: &[String],
    embeddings: &FeatureMatrix,
    q: u32,
    seed: u64,
    max_iters: usize,
) -> Result<AnnotationMap> {
    if parents.len() != embeddings.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} parent ids for {} embedding rows",
            parents.len(),
            embeddings.rows()
        )));
    }
    let assignment = kmeans(embeddings, q as usize, seed, max_iters)?;
    let map: BTreeMap<String, u32> = parents
        .iter()
        .cloned()
        .zip(assignment.iter().copied())
        .collect();
    AnnotationMap::new(map, q)
}

/// Maps each entity's parent list through the annotation map, yielding
/// sorted, deduplicated multi-label class lists.
pub fn annotate(
    per_entity_parents: &[Vec<String>],
    map: &AnnotationMap,
) -> Result<LabelMatrix> {
    let mut lists = Vec::with_capacity(per_entity_parents.len());
    for (node, parents) in per_entity_parents.iter().enumerate() {
        let mut classes = Vec::with_capacity(parents.len());
        for parent in parents {
            let class = map
                .class_of(parent)
                .ok_or_else(|| Error::UnmappedParent(parent.clone()))?;
            classes.push(class);
        }
        lists.push((node as u64, classes));
    }
    LabelMatrix::from_lists(
        lists,
        per_entity_parents.len() as u64,
        map.class_count(),
    )
}
