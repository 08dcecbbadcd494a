//! Adam training loop, loss log and checkpoint persistence.

use std::io::Write;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::apm::PropagationStack;
use crate::io::{read_features, write_atomic, write_features};
use crate::labels::LabelMatrix;
use crate::matrix::FeatureMatrix;
use crate::metrics::{evaluate, EvalReport};
use crate::pipeline::Split;

use super::kinds::{backward, forward, forward_cached};
use super::linalg::DMat;
use super::{bce_loss, predict_labels, ModelSpec, ModelState, Tensor, TrainConfig};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Multi-label decision threshold used for validation metrics.
pub(crate) const DECISION_THRESHOLD: f64 = 0.5;

/// One line of the loss log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val: Option<EvalReport>,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("epoch log serializes")
    }
}

fn adam_step(state: &mut ModelState, grads: &[DMat], lr: f64) {
    state.adam_step += 1;
    let t = state.adam_step as f64;
    let bias1 = 1.0 - ADAM_BETA1.powf(t);
    let bias2 = 1.0 - ADAM_BETA2.powf(t);
    for (p_idx, grad) in grads.iter().enumerate() {
        let param = &mut state.params[p_idx].mat.data;
        let m = &mut state.adam_m[p_idx];
        let v = &mut state.adam_v[p_idx];
        for i in 0..param.len() {
            let g = grad.data[i];
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = m[i] / bias1;
            let v_hat = v[i] / bias2;
            param[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> DMat {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < keep { scale } else { 0.0 })
        .collect();
    DMat { rows, cols, data }
}

/// Evaluates `state` on `nodes` with the fixed decision threshold.
pub fn evaluate_nodes(
    state: &ModelState,
    stack: &PropagationStack,
    labels: &LabelMatrix,
    nodes: &[u64],
) -> Result<EvalReport> {
    let probs = forward(state, stack, nodes)?;
    let predicted = predict_labels(&probs, DECISION_THRESHOLD);
    evaluate(&predicted, nodes, labels)
}

/// Trains a model on the train split, tracking validation micro-F1 after
/// every epoch and returning the state that scored best (ties keep the
/// earlier epoch), together with the per-epoch loss log.
///
/// Only labeled nodes participate. A non-finite training loss aborts with
/// the last finite loss in the error.
pub fn train(
    spec: ModelSpec,
    cfg: &TrainConfig,
    stack: &PropagationStack,
    labels: &LabelMatrix,
    split: &Split,
) -> Result<(ModelState, Vec<EpochLog>)> {
    spec.validate()?;
    cfg.validate()?;
    let mut state = ModelState::init(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut train_nodes: Vec<u64> = split
        .train
        .iter()
        .copied()
        .filter(|&v| (v as usize) < stack.rows() && labels.is_labeled(v))
        .collect();
    let val_nodes: Vec<u64> = split
        .val
        .iter()
        .copied()
        .filter(|&v| (v as usize) < stack.rows() && labels.is_labeled(v))
        .collect();
    if train_nodes.is_empty() {
        return Err(Error::InvalidInput("no labeled training nodes".into()));
    }

    let head_width = match spec.kind {
        super::ModelKind::RSign => (spec.num_hops + 1) * spec.hidden_dim,
        _ => spec.hidden_dim,
    };

    let mut logs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<Tensor>, usize)> = None;
    let mut last_finite = f64::NAN;

    for epoch in 1..=cfg.epochs {
        train_nodes.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut loss_weight = 0usize;
        for batch in train_nodes.chunks(cfg.batch_size) {
            let mask = if spec.dropout_rate > 0.0 {
                Some(dropout_mask(
                    &mut rng,
                    batch.len(),
                    head_width,
                    spec.dropout_rate,
                ))
            } else {
                None
            };
            let pass = forward_cached(&state, stack, batch, mask)?;
            let (loss, d_probs) = bce_loss(&pass.probs, batch, labels)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, last_finite });
            }
            last_finite = loss;
            loss_sum += loss * batch.len() as f64;
            loss_weight += batch.len();

            let mut d_logits = DMat::zeros(d_probs.rows, d_probs.cols);
            for (dl, (dp, p)) in d_logits
                .data
                .iter_mut()
                .zip(d_probs.data.iter().zip(&pass.probs.data))
            {
                *dl = dp * p * (1.0 - p);
            }
            let grads = backward(&state, &pass, &d_logits);
            adam_step(&mut state, &grads, cfg.learning_rate);
        }
        state.check_finite()?;
        state.epoch = epoch;

        let val = if val_nodes.is_empty() {
            None
        } else {
            Some(evaluate_nodes(&state, stack, labels, &val_nodes)?)
        };
        if let Some(report) = &val {
            let better = match &best {
                None => true,
                Some((best_f1, _, _)) => report.f1 > *best_f1,
            };
            if better {
                best = Some((report.f1, state.params.clone(), epoch));
            }
        }
        logs.push(EpochLog {
            epoch,
            train_loss: loss_sum / loss_weight as f64,
            val,
        });
    }

    if let Some((_, params, epoch)) = best {
        state.params = params;
        state.epoch = epoch;
    }
    Ok((state, logs))
}

/// Checkpoint sidecar: spec, the epoch the weights come from, metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub spec: ModelSpec,
    pub epoch: usize,
    pub val: Option<EvalReport>,
    pub tensors: Vec<String>,
}

/// Writes `meta.json` plus one features-binary file per tensor into `dir`.
pub fn save_checkpoint(dir: &Path, state: &ModelState, val: Option<EvalReport>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let meta = CheckpointMeta {
        spec: state.spec,
        epoch: state.epoch,
        val,
        tensors: state.params.iter().map(|t| t.name.clone()).collect(),
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    write_atomic(&meta_path, |out| {
        out.write_all(text.as_bytes())
            .map_err(|e| Error::io(&meta_path, e))
    })?;
    for t in &state.params {
        let data: Vec<f32> = t.mat.data.iter().map(|&v| v as f32).collect();
        let m = FeatureMatrix::from_data(t.mat.rows, t.mat.cols, data)?;
        write_features(&dir.join(format!("{}.ukgf", t.name)), &m)?;
    }
    Ok(())
}

/// Loads a checkpoint saved by [`save_checkpoint`]. Optimizer moments are
/// not persisted; the returned state is ready for inference.
pub fn load_checkpoint(dir: &Path) -> Result<(ModelState, CheckpointMeta)> {
    let meta_path = dir.join("meta.json");
    let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| Error::Malformed {
        format: "checkpoint meta",
        line: 0,
        reason: e.to_string(),
    })?;
    let mut state = ModelState::init(meta.spec)?;
    if meta.tensors.len() != state.params.len() {
        return Err(Error::Malformed {
            format: "checkpoint meta",
            line: 0,
            reason: format!(
                "{} tensors listed, model has {}",
                meta.tensors.len(),
                state.params.len()
            ),
        });
    }
    for name in &meta.tensors {
        let m = read_features(&dir.join(format!("{name}.ukgf")))?;
        let idx = state
            .params
            .iter()
            .position(|t| &t.name == name)
            .ok_or_else(|| Error::Malformed {
                format: "checkpoint meta",
                line: 0,
                reason: format!("unexpected tensor {name:?}"),
            })?;
        let target = &mut state.params[idx].mat;
        if (m.rows(), m.dim()) != (target.rows, target.cols) {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name}: {} x {} in file, {} x {} expected",
                m.rows(),
                m.dim(),
                target.rows,
                target.cols
            )));
        }
        for (o, v) in target.data.iter_mut().zip(m.data()) {
            *o = *v as f64;
        }
    }
    state.epoch = meta.epoch;
    Ok((state, meta))
}

#[cfg(test)]
mod tests {
    use super::super::ModelKind;
    use super::*;
    
    use rand_chacha::ChaCha8Rng;
    use tempfile::tempdir;

    /// Two well-separated classes: features are a one-hot of the class
    /// plus small noise, so r_mlp must fit them quickly.
    fn separable_fixture(n: u64) -> (PropagationStack, LabelMatrix, Split) {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let d = 4;
        let mut x = FeatureMatrix::zeros(n as usize, d);
        let mut lists = Vec::new();
        for v in 0..n {
            let class = (v % 2) as u32;
            let row = x.row_mut(v as usize);
            for item in row.iter_mut() {
                *item = rng.gen_range(-0.05..0.05);
            }
            row[class as usize] += 1.0;
            lists.push((v, vec![class]));
        }
        let labels = LabelMatrix::from_lists(lists, n, 2).unwrap();
        let stack = PropagationStack::new(vec![x]).unwrap();
        let mut ids: Vec<u64> = (0..n).collect();
        ids.shuffle(&mut rng);
        let n_train = (n as usize * 8) / 10;
        let n_val = (n as usize - n_train) / 2;
        let split = Split {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        };
        (stack, labels, split)
    }

    fn mlp_spec(d: usize, q: usize, hops: usize) -> ModelSpec {
        ModelSpec {
            kind: ModelKind::RMlp,
            input_dim: d,
            hidden_dim: 16,
            class_count: q,
            num_hops: hops,
            dropout_rate: 0.0,
            seed: 3,
        }
    }

    #[test]
    fn separable_toy_converges() {
        let (stack, labels, split) = separable_fixture(60);
        let cfg = TrainConfig {
            epochs: 100,
            batch_size: 32,
            ..TrainConfig::default()
        };
        let (state, logs) = train(mlp_spec(4, 2, 0), &cfg, &stack, &labels, &split).unwrap();
        let report = evaluate_nodes(&state, &stack, &labels, &split.train).unwrap();
        assert!(
            report.subset_accuracy >= 0.95,
            "train subset accuracy {}",
            report.subset_accuracy
        );
        // Statistical monotonicity: later loss beats the first epoch.
        assert!(logs.last().unwrap().train_loss < logs[0].train_loss);
    }

    #[test]
    fn zero_learning_rate_keeps_weights() {
        let (stack, labels, split) = separable_fixture(20);
        let spec = mlp_spec(4, 2, 0);
        let initial = ModelState::init(spec).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let (state, _) = train(spec, &cfg, &stack, &labels, &split).unwrap();
        for (a, b) in initial.params.iter().zip(&state.params) {
            assert_eq!(a.mat.data, b.mat.data, "tensor {}", a.name);
        }
    }

    #[test]
    fn same_seed_gives_bitwise_identical_logs() {
        let (stack, labels, split) = separable_fixture(40);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let spec = mlp_spec(4, 2, 0);
        let (_, logs_a) = train(spec, &cfg, &stack, &labels, &split).unwrap();
        let (_, logs_b) = train(spec, &cfg, &stack, &labels, &split).unwrap();
        let a: Vec<String> = logs_a.iter().map(|l| l.to_json_line()).collect();
        let b: Vec<String> = logs_b.iter().map(|l| l.to_json_line()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn best_validation_state_is_returned() {
        let (stack, labels, split) = separable_fixture(60);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (state, logs) = train(mlp_spec(4, 2, 0), &cfg, &stack, &labels, &split).unwrap();
        let best_f1 = logs
            .iter()
            .filter_map(|l| l.val.as_ref().map(|v| v.f1))
            .fold(f64::NEG_INFINITY, f64::max);
        let returned = evaluate_nodes(&state, &stack, &labels, &split.val).unwrap();
        assert!((returned.f1 - best_f1).abs() <= 1e-12);
        assert!(logs[state.epoch - 1].val.unwrap().f1 == best_f1);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let (stack, labels, split) = separable_fixture(30);
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (state, logs) = train(mlp_spec(4, 2, 0), &cfg, &stack, &labels, &split).unwrap();
        let dir = tempdir().unwrap();
        let val = logs.last().unwrap().val;
        save_checkpoint(dir.path(), &state, val).unwrap();
        let (loaded, meta) = load_checkpoint(dir.path()).unwrap();
        assert_eq!(meta.spec, state.spec);
        assert_eq!(meta.epoch, state.epoch);
        // Weights round-trip through f32 storage.
        for (a, b) in state.params.iter().zip(&loaded.params) {
            assert_eq!(a.name, b.name);
            for (x, y) in a.mat.data.iter().zip(&b.mat.data) {
                assert!((x - y).abs() <= (*x as f32).abs() as f64 * 1e-6 + 1e-9);
            }
        }
    }

    #[test]
    fn dropout_training_stays_deterministic() {
        let (stack, labels, split) = separable_fixture(30);
        let spec = ModelSpec {
            dropout_rate: 0.3,
            ..mlp_spec(4, 2, 0)
        };
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let (a, logs_a) = train(spec, &cfg, &stack, &labels, &split).unwrap();
        let (b, logs_b) = train(spec, &cfg, &stack, &labels, &split).unwrap();
        assert_eq!(logs_a, logs_b);
        for (ta, tb) in a.params.iter().zip(&b.params) {
            assert_eq!(ta.mat.data, tb.mat.data);
        }
    }
}
