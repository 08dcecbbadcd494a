//! Multi-label evaluation: subset accuracy and micro-averaged P/R/F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub subset_accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Labeled nodes the report covers.
    pub node_count: usize,
}

impl EvalReport {
    /// Aligned text table in Acc. / Prec. / Rec. / F1. column order.
    pub fn render_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8}\n{:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            "Acc.", "Prec.", "Rec.", "F1.", self.subset_accuracy, self.precision, self.recall, self.f1
        )
    }
}

/// Scores predicted label sets against the ground truth for `nodes`.
///
/// `predicted[i]` is the predicted class set of `nodes[i]` (sorted ids).
/// Subset accuracy counts nodes whose predicted set equals the truth set
/// exactly; precision/recall/F1 are micro-averaged over all (node, class)
/// decisions. Unlabeled nodes are skipped. All 0/0 ratios are 0.
pub fn evaluate(
    predicted: &[Vec<u32>],
    nodes: &[u64],
    truth: &LabelMatrix,
) -> Result<EvalReport> {
    if predicted.len() != nodes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} nodes",
            predicted.len(),
            nodes.len()
        )));
    }
    let mut evaluated = 0usize;
    let mut exact = 0usize;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (pred, &node) in predicted.iter().zip(nodes) {
        if node >= truth.node_count() {
            return Err(Error::NodeOutOfRange {
                index: node,
                bound: truth.node_count(),
            });
        }
        let actual = truth.classes(node);
        if actual.is_empty() {
            continue;
        }
        evaluated += 1;
        if pred.as_slice() == actual {
            exact += 1;
        }
        // Both lists are sorted: merge-count the confusion cells.
        let (mut i, mut j) = (0usize, 0usize);
        while i < pred.len() && j < actual.len() {
            match pred[i].cmp(&actual[j]) {
                std::cmp::Ordering::Equal => {
                    tp += 1;
                    i += 1;
                    j += 1;
                }
                std::cmp::Ordering::Less => {
                    fp += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    fn_ += 1;
                    j += 1;
                }
            }
        }
        fp += (pred.len() - i) as u64;
        fn_ += (actual.len() - j) as u64;
    }

    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let subset_accuracy = if evaluated == 0 {
        0.0
    } else {
        exact as f64 / evaluated as f64
    };
    Ok(EvalReport {
        subset_accuracy,
        precision,
        recall,
        f1,
        node_count: evaluated,
    })
}
