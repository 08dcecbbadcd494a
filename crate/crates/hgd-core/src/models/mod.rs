//! Post-classifiers trained on precomputed propagation stacks.
//!
//! Five baselines share one multi-label head (sigmoid + BCE) and differ in
//! how they fuse the hop features:
//!
//! - `r_mlp`: original features only (hop 0);
//! - `r_sgc`: last hop only;
//! - `r_sign`: concatenated per-hop linear projections;
//! - `r_sagn`: per-node hop-wise attention over the projections;
//! - `r_gamlp`: recursive gating, each hop conditioned on the running
//!   combination of the previous ones.
//!
//! Propagation already happened, so a "batch" is just a set of node rows:
//! no neighborhood sampling, no graph access. Backpropagation is manual
//! and everything trains in f64 under Adam.

mod kinds;
mod linalg;
mod train;

pub use kinds::forward;
pub use linalg::DMat;
pub use train::{
    evaluate_nodes, load_checkpoint, save_checkpoint, train, CheckpointMeta, EpochLog,
};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelMatrix;


/// Clamp applied to probabilities before logs in the BCE loss.
pub const BCE_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    RMlp,
    RSgc,
    RSign,
    RSagn,
    RGamlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::RMlp,
        ModelKind::RSgc,
        ModelKind::RSign,
        ModelKind::RSagn,
        ModelKind::RGamlp,
    ];
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r_mlp" => Ok(ModelKind::RMlp),
            "r_sgc" => Ok(ModelKind::RSgc),
            "r_sign" => Ok(ModelKind::RSign),
            "r_sagn" => Ok(ModelKind::RSagn),
            "r_gamlp" => Ok(ModelKind::RGamlp),
            other => Err(Error::InvalidInput(format!(
                "unknown model kind {other:?} (r_mlp|r_sgc|r_sign|r_sagn|r_gamlp)"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::RMlp => "r_mlp",
            ModelKind::RSgc => "r_sgc",
            ModelKind::RSign => "r_sign",
            ModelKind::RSagn => "r_sagn",
            ModelKind::RGamlp => "r_gamlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub class_count: usize,
    /// K: the stack this model consumes has K+1 hops.
    pub num_hops: usize,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 || self.hidden_dim < 1 || self.class_count < 1 {
            return Err(Error::InvalidInput(
                "model dimensions must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidInput(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    /// Hop indices this kind consumes, ascending.
    pub(crate) fn used_hops(&self) -> Vec<usize> {
        match self.kind {
            ModelKind::RMlp => vec![0],
            ModelKind::RSgc => vec![self.num_hops],
            ModelKind::RSign | ModelKind::RSagn | ModelKind::RGamlp => {
                (0..=self.num_hops).collect()
            }
        }
    }

    /// Width of the hidden representation entering the output head.
    fn head_width(&self) -> usize {
        match self.kind {
            ModelKind::RSign => (self.num_hops + 1) * self.hidden_dim,
            _ => self.hidden_dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.01,
            batch_size: 1024,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidInput(
                "epochs and batch_size must be >= 1".into(),
            ));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::InvalidInput("learning_rate must be >= 0".into()));
        }
        Ok(())
    }
}

/// A named parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub mat: DMat,
}

/// All learnable state of one model: parameter tensors plus the Adam
/// moment estimates that accompany them.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub spec: ModelSpec,
    pub params: Vec<Tensor>,
    pub(crate) adam_m: Vec<Vec<f64>>,
    pub(crate) adam_v: Vec<Vec<f64>>,
    pub(crate) adam_step: u64,
    pub epoch: usize,
}

impl ModelState {
    /// Fresh state with fan-in-scaled uniform weight init and zero biases,
    /// fully determined by `spec.seed`.
    pub fn init(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (d, h, q) = (spec.input_dim, spec.hidden_dim, spec.class_count);
        let mut params = Vec::new();

        let weight = |name: String, rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            let bound = (6.0 / rows as f64).sqrt();
            let data = (0..rows * cols)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            Tensor {
                name,
                mat: DMat { rows, cols, data },
            }
        };
        let zero = |name: String, rows: usize, cols: usize| Tensor {
            name,
            mat: DMat::zeros(rows, cols),
        };

        for k in spec.used_hops() {
            params.push(weight(format!("theta_{k}"), d, h, &mut rng));
        }
        for k in spec.used_hops() {
            params.push(zero(format!("bias_{k}"), 1, h));
        }
        match spec.kind {
            ModelKind::RSagn => {
                params.push(weight("attn_hop".into(), h, 1, &mut rng));
                params.push(weight("attn_base".into(), h, 1, &mut rng));
            }
            ModelKind::RGamlp => {
                params.push(weight("gate_prev".into(), h, 1, &mut rng));
                params.push(weight("gate_cur".into(), h, 1, &mut rng));
                params.push(zero("gate_bias".into(), 1, 1));
            }
            _ => {}
        }
        params.push(weight("out_w".into(), spec.head_width(), q, &mut rng));
        params.push(zero("out_b".into(), 1, q));

        let adam_m = params.iter().map(|t| vec![0.0; t.mat.data.len()]).collect();
        let adam_v = params.iter().map(|t| vec![0.0; t.mat.data.len()]).collect();
        Ok(ModelState {
            spec,
            params,
            adam_m,
            adam_v,
            adam_step: 0,
            epoch: 0,
        })
    }

    pub fn tensor(&self, name: &str) -> &DMat {
        &self.params[self.tensor_index(name)].mat
    }

    pub(crate) fn tensor_index(&self, name: &str) -> usize {
        self.params
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("model has no tensor {name:?}"))
    }

    pub fn check_finite(&self) -> Result<()> {
        for t in &self.params {
            if let Some(pos) = t.mat.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    row: pos / t.mat.cols,
                    col: pos % t.mat.cols,
                });
            }
        }
        Ok(())
    }
}

/// Mean binary cross-entropy over every (labeled node, class) decision in
/// the batch, plus the gradient with respect to the predictions.
///
/// Each log argument is floored at `BCE_EPSILON`, so a perfect-confidence
/// prediction cannot produce infinities and a perfectly correct one costs
/// exactly zero. Rows whose node is unlabeled contribute nothing to loss
/// or gradient.
pub fn bce_loss(pred: &DMat, nodes: &[u64], truth: &LabelMatrix) -> Result<(f64, DMat)> {
    if pred.rows != nodes.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} prediction rows for {} nodes",
            pred.rows,
            nodes.len()
        )));
    }
    if pred.cols != truth.class_count() as usize {
        return Err(Error::ShapeMismatch(format!(
            "{} prediction columns for {} classes",
            pred.cols,
            truth.class_count()
        )));
    }
    let labeled = nodes.iter().filter(|&&v| truth.is_labeled(v)).count();
    let mut grad = DMat::zeros(pred.rows, pred.cols);
    if labeled == 0 {
        return Ok((0.0, grad));
    }
    let count = (labeled * pred.cols) as f64;
    let mut loss = 0.0;
    for (i, &node) in nodes.iter().enumerate() {
        let classes = truth.classes(node);
        if classes.is_empty() {
            continue;
        }
        let row = pred.row(i);
        let grad_row = grad.row_mut(i);
        let mut next = 0usize;
        for (c, (&p, g)) in row.iter().zip(grad_row.iter_mut()).enumerate() {
            let y = if next < classes.len() && classes[next] == c as u32 {
                next += 1;
                1.0
            } else {
                0.0
            };
            let p_pos = p.max(BCE_EPSILON);
            let p_neg = (1.0 - p).max(BCE_EPSILON);
            loss -= y * p_pos.ln() + (1.0 - y) * p_neg.ln();
            *g = ((1.0 - y) / p_neg - y / p_pos) / count;
        }
    }
    Ok((loss / count, grad))
}

/// Analytic gradients of the mean BCE loss with respect to every
/// parameter tensor, in parameter order. Runs the eval-mode forward pass
/// (no dropout), so the result is exactly what a finite-difference probe
/// of [`bce_loss`] over [`forward`] should reproduce.
pub fn loss_gradients(
    state: &ModelState,
    stack: &crate::apm::PropagationStack,
    batch: &[u64],
    labels: &LabelMatrix,
) -> Result<Vec<DMat>> {
    let pass = kinds::forward_cached(state, stack, batch, None)?;
    let (_, d_probs) = bce_loss(&pass.probs, batch, labels)?;
    let mut d_logits = DMat::zeros(d_probs.rows, d_probs.cols);
    for (dl, (dp, p)) in d_logits
        .data
        .iter_mut()
        .zip(d_probs.data.iter().zip(&pass.probs.data))
    {
        *dl = dp * p * (1.0 - p);
    }
    Ok(kinds::backward(state, &pass, &d_logits))
}

/// Thresholded multi-label decision rule: class `c` is assigned to a node
/// iff its probability is at least `threshold` (boundary inclusive).
pub fn predict_labels(pred: &DMat, threshold: f64) -> Vec<Vec<u32>> {
    (0..pred.rows)
        .map(|i| {
            pred.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p >= threshold)
                .map(|(c, _)| c as u32)
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(lists: Vec<(u64, Vec<u32>)>, n: u64, q: u32) -> LabelMatrix {
        LabelMatrix::from_lists(lists, n, q).unwrap()
    }

    #[test]
    fn bce_half_probabilities_is_ln2() {
        let truth = labels(vec![(0, vec![0]), (1, vec![1, 2])], 2, 3);
        let pred = DMat {
            rows: 2,
            cols: 3,
            data: vec![0.5; 6],
        };
        let (loss, _) = bce_loss(&pred, &[0, 1], &truth).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_perfect_prediction_reaches_zero() {
        let truth = labels(vec![(0, vec![1])], 1, 2);
        let pred = DMat {
            rows: 1,
            cols: 2,
            data: vec![1e-12, 1.0 - 1e-12],
        };
        let (loss, _) = bce_loss(&pred, &[0], &truth).unwrap();
        assert!(loss >= 0.0 && loss < 1e-9, "loss {loss}");
        // Exactly saturated predictions are tolerated by the clamp.
        let exact = DMat {
            rows: 1,
            cols: 2,
            data: vec![0.0, 1.0],
        };
        let (loss, grad) = bce_loss(&exact, &[0], &truth).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.data.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let truth = labels(
            vec![(0, vec![0, 3]), (1, vec![2]), (2, vec![1])],
            3,
            4,
        );
        let nodes = [0u64, 1, 2];
        let mut pred = DMat::zeros(3, 4);
        for v in &mut pred.data {
            *v = rng.gen_range(0.05..0.95);
        }
        let (_, grad) = bce_loss(&pred, &nodes, &truth).unwrap();
        let h = 1e-6;
        for idx in 0..pred.data.len() {
            let orig = pred.data[idx];
            pred.data[idx] = orig + h;
            let (up, _) = bce_loss(&pred, &nodes, &truth).unwrap();
            pred.data[idx] = orig - h;
            let (down, _) = bce_loss(&pred, &nodes, &truth).unwrap();
            pred.data[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grad.data[idx];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
            assert!(rel <= 1e-4, "element {idx}: fd {fd} vs analytic {an}");
        }
    }

    #[test]
    fn bce_skips_unlabeled_rows() {
        let truth = labels(vec![(0, vec![0])], 2, 2);
        let pred = DMat {
            rows: 2,
            cols: 2,
            data: vec![0.5, 0.5, 0.9, 0.9],
        };
        let (loss, grad) = bce_loss(&pred, &[0, 1], &truth).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(&grad.data[2..4], &[0.0, 0.0]);
    }

    #[test]
    fn predict_threshold_boundary_inclusive() {
        let pred = DMat {
            rows: 1,
            cols: 3,
            data: vec![0.9, 0.4, 0.5],
        };
        assert_eq!(predict_labels(&pred, 0.5), vec![vec![0, 2]]);
        assert_eq!(predict_labels(&pred, 0.999_999), vec![Vec::<u32>::new()]);
    }

    #[test]
    fn predict_matches_scalar_loop_oracle() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let mut pred = DMat::zeros(15, 5);
        for v in &mut pred.data {
            *v = rng.gen_range(0.0..1.0);
        }
        let got = predict_labels(&pred, 0.5);
        for i in 0..15 {
            let mut want = Vec::new();
            for c in 0..5 {
                if pred.data[i * 5 + c] >= 0.5 {
                    want.push(c as u32);
                }
            }
            assert_eq!(got[i], want);
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec {
            kind: ModelKind::RMlp,
            input_dim: 4,
            hidden_dim: 8,
            class_count: 2,
            num_hops: 2,
            dropout_rate: 0.0,
            seed: 1,
        };
        assert!(spec.validate().is_ok());
        spec.dropout_rate = 1.0;
        assert!(spec.validate().is_err());
        spec.dropout_rate = 0.5;
        spec.hidden_dim = 0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = ModelSpec {
            kind: ModelKind::RSagn,
            input_dim: 4,
            hidden_dim: 8,
            class_count: 3,
            num_hops: 2,
            dropout_rate: 0.0,
            seed: 7,
        };
        let a = ModelState::init(spec).unwrap();
        let b = ModelState::init(spec).unwrap();
        for (ta, tb) in a.params.iter().zip(&b.params) {
            assert_eq!(ta, tb);
        }
    }
}
