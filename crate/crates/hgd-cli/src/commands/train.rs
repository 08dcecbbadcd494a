//! `train` and `eval`: fit a post-classifier on a precomputed stack and
//! score it on the held-out test split.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use hgd_core::apm::DiskStack;
use hgd_core::io::{read_labels_tsv, write_atomic};
use hgd_core::labels::LabelMatrix;
use hgd_core::metrics::EvalReport;
use hgd_core::models::{
    load_checkpoint, save_checkpoint, train, ModelKind, ModelSpec, TrainConfig,
};
use hgd_core::pipeline::{split, Split};

use crate::config::RunConfig;
use crate::lock::DirLock;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: ModelKind,
    pub best_epoch: usize,
    pub train_nodes: usize,
    pub val_nodes: usize,
    pub test_nodes: usize,
    pub val: Option<EvalReport>,
    pub test: EvalReport,
}

fn load_labels_for_stack(
    labels_path: &Path,
    stack_rows: u64,
    classes: u32,
) -> Result<LabelMatrix> {
    read_labels_tsv(labels_path, stack_rows, classes)
        .with_context(|| format!("reading labels {}", labels_path.display()))
}

fn resolve_split(
    split_path: Option<&Path>,
    labels: &LabelMatrix,
    cfg: &RunConfig,
) -> Result<Split> {
    match split_path {
        Some(path) => {
            Split::read_tsv(path).with_context(|| format!("reading split {}", path.display()))
        }
        None => {
            let labeled = labels.labeled_nodes();
            Ok(split(
                &labeled,
                (cfg.train_ratio, cfg.val_ratio, cfg.test_ratio),
                cfg.split_seed(),
            )?)
        }
    }
}

pub fn cmd_train(
    stack_dir: &Path,
    labels_path: &Path,
    out: &Path,
    cfg: &RunConfig,
    split_path: Option<&Path>,
) -> Result<TrainReport> {
    let _lock = DirLock::acquire(out)?;

    let disk = DiskStack::open(stack_dir)
        .with_context(|| format!("opening stack {}", stack_dir.display()))?;
    let stack = disk.load()?;
    let labels = load_labels_for_stack(labels_path, stack.rows() as u64, cfg.classes)?;
    let node_split = resolve_split(split_path, &labels, cfg)?;

    let spec = ModelSpec {
        kind: cfg.model,
        input_dim: stack.dim(),
        hidden_dim: cfg.hidden,
        class_count: cfg.classes as usize,
        num_hops: stack.num_hops(),
        dropout_rate: cfg.dropout,
        seed: cfg.train_seed(),
    };
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.lr,
        batch_size: cfg.batch_size,
        seed: cfg.train_seed(),
    };
    let (state, logs) = train(spec, &train_cfg, &stack, &labels, &node_split)?;

    let log_path = out.join("loss_log.jsonl");
    write_atomic(&log_path, |log_out| {
        for entry in &logs {
            writeln!(log_out, "{}", entry.to_json_line())
                .map_err(|e| hgd_core::Error::io(&log_path, e))?;
        }
        Ok(())
    })?;

    let best_val = logs
        .iter()
        .find(|l| l.epoch == state.epoch)
        .and_then(|l| l.val);
    save_checkpoint(&out.join("checkpoint"), &state, best_val)?;

    let test_nodes: Vec<u64> = node_split
        .test
        .iter()
        .copied()
        .filter(|&v| (v as usize) < stack.rows() && labels.is_labeled(v))
        .collect();
    let test = hgd_core::models::evaluate_nodes(&state, &stack, &labels, &test_nodes)?;
    node_split.write_tsv(&out.join("split.tsv"))?;

    let report = TrainReport {
        model: cfg.model,
        best_epoch: state.epoch,
        train_nodes: node_split.train.len(),
        val_nodes: node_split.val.len(),
        test_nodes: test_nodes.len(),
        val: best_val,
        test,
    };
    super::write_stats_json(&out.join("report.json"), &report)?;
    Ok(report)
}

/// Re-scores a saved checkpoint; the split comes from a file or is
/// regenerated from the configured seed, exactly as in training.
pub fn cmd_eval(
    checkpoint_dir: &Path,
    stack_dir: &Path,
    labels_path: &Path,
    cfg: &RunConfig,
    split_path: Option<&Path>,
) -> Result<TrainReport> {
    let disk = DiskStack::open(stack_dir)
        .with_context(|| format!("opening stack {}", stack_dir.display()))?;
    let stack = disk.load()?;
    let (state, meta) = load_checkpoint(checkpoint_dir)?;
    let labels = load_labels_for_stack(
        labels_path,
        stack.rows() as u64,
        meta.spec.class_count as u32,
    )?;
    let node_split = resolve_split(split_path, &labels, cfg)?;
    let test_nodes: Vec<u64> = node_split
        .test
        .iter()
        .copied()
        .filter(|&v| (v as usize) < stack.rows() && labels.is_labeled(v))
        .collect();
    let test = hgd_core::models::evaluate_nodes(&state, &stack, &labels, &test_nodes)?;
    Ok(TrainReport {
        model: meta.spec.kind,
        best_epoch: meta.epoch,
        train_nodes: node_split.train.len(),
        val_nodes: node_split.val.len(),
        test_nodes: test_nodes.len(),
        val: meta.val,
        test,
    })
}

/// Locates the checkpoint directory under a train output directory.
pub fn checkpoint_dir_of(train_out: &Path) -> PathBuf {
    train_out.join("checkpoint")
}
