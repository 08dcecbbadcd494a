//! Multi-label node annotations.

use crate::error::{Error, Result};

/// Assignment of nodes to zero or more of `class_count` classes.
///
/// Per-node lists are sorted and deduplicated. Nodes with empty lists are
/// unlabeled and excluded from loss and metric computation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMatrix {
    node_count: u64,
    class_count: u32,
    offsets: Vec<u64>,
    classes: Vec<u32>,
}

impl LabelMatrix {
    /// Builds from per-node class lists; lists are sorted and deduplicated.
    pub fn from_lists(lists: Vec<(u64, Vec<u32>)>, node_count: u64, class_count: u32) -> Result<Self> {
        let mut per_node: Vec<Vec<u32>> = vec![Vec::new(); node_count as usize];
        for (node, classes) in lists {
            if node >= node_count {
                return Err(Error::NodeOutOfRange {
                    index: node,
                    bound: node_count,
                });
            }
            for &c in &classes {
                if c >= class_count {
                    return Err(Error::ClassOutOfRange {
                        index: c,
                        bound: class_count,
                    });
                }
            }
            per_node[node as usize].extend(classes);
        }
        let mut offsets = Vec::with_capacity(node_count as usize + 1);
        offsets.push(0u64);
        let mut flat = Vec::new();
        for mut list in per_node {
            list.sort_unstable();
            list.dedup();
            flat.extend_from_slice(&list);
            offsets.push(flat.len() as u64);
        }
        Ok(LabelMatrix {
            node_count,
            class_count,
            offsets,
            classes: flat,
        })
    }

    pub fn node_count(&self) -> u64 {
        self.node_count
    }

    pub fn class_count(&self) -> u32 {
        self.class_count
    }

    pub fn classes(&self, node: u64) -> &[u32] {
        let lo = self.offsets[node as usize] as usize;
        let hi = self.offsets[node as usize + 1] as usize;
        &self.classes[lo..hi]
    }

    pub fn is_labeled(&self, node: u64) -> bool {
        !self.classes(node).is_empty()
    }

    /// Ids of all labeled nodes, ascending.
    pub fn labeled_nodes(&self) -> Vec<u64> {
        (0..self.node_count).filter(|&v| self.is_labeled(v)).collect()
    }
}
