//! Forward and backward passes for the five classifier kinds.
//!
//! Each kind produces a hidden representation from the hop features, then
//! shares the sigmoid output head. `forward_cached` keeps every
//! intermediate needed by `backward`; the public `forward` is the pure
//! eval-mode entry point (no dropout, no cache).

use crate::apm::PropagationStack;
use crate::error::{Error, Result};

use super::linalg::{
    leaky_relu_grad_scalar, leaky_relu_scalar, relu, relu_backward, sigmoid, DMat,
};
use super::{ModelKind, ModelState};

pub(crate) enum Cache {
    /// r_mlp and r_sgc: one projected hop through a relu layer.
    Feedforward { input: DMat, pre: DMat },
    /// r_sign: all hops projected and concatenated, relu on the concat.
    Sign { inputs: Vec<DMat>, pre: DMat },
    /// r_sagn: hop-wise attention. `scores_pre` holds the pre-activation
    /// attention scores, `alpha` the per-node softmax over hops.
    Sagn {
        inputs: Vec<DMat>,
        projected: Vec<DMat>,
        scores_pre: Vec<Vec<f64>>,
        alpha: DMat,
        pre: DMat,
    },
    /// r_gamlp: recursive gating. `running[k]` is the combination after
    /// folding in hop k; `gates_pre` the pre-sigmoid gate inputs.
    Gamlp {
        inputs: Vec<DMat>,
        projected: Vec<DMat>,
        running: Vec<DMat>,
        gates_pre: Vec<Vec<f64>>,
        gates: Vec<Vec<f64>>,
    },
}

pub(crate) struct ForwardPass {
    pub cache: Cache,
    /// Hidden activation entering the output head (after dropout).
    pub hidden: DMat,
    pub dropout_mask: Option<DMat>,
    pub probs: DMat,
}

fn check_batch(state: &ModelState, stack: &PropagationStack, batch: &[u64]) -> Result<()> {
    let spec = &state.spec;
    if stack.num_hops() != spec.num_hops {
        return Err(Error::ShapeMismatch(format!(
            "stack has {} hops, model expects {}",
            stack.num_hops(),
            spec.num_hops
        )));
    }
    if stack.dim() != spec.input_dim {
        return Err(Error::DimMismatch {
            expected: spec.input_dim,
            got: stack.dim(),
        });
    }
    for &v in batch {
        if v as usize >= stack.rows() {
            return Err(Error::NodeOutOfRange {
                index: v,
                bound: stack.rows() as u64,
            });
        }
    }
    Ok(())
}

/// Projects hop `k` for the batch: `c_k Θ_k + b_k`.
fn project_hop(state: &ModelState, stack: &PropagationStack, batch: &[u64], k: usize) -> (DMat, DMat) {
    let input = DMat::gather(stack.hop(k), batch);
    let mut projected = input.matmul(state.tensor(&format!("theta_{k}")));
    projected.add_bias(&state.tensor(&format!("bias_{k}")).data);
    (input, projected)
}

pub(crate) fn forward_cached(
    state: &ModelState,
    stack: &PropagationStack,
    batch: &[u64],
    dropout_mask: Option<DMat>,
) -> Result<ForwardPass> {
    check_batch(state, stack, batch)?;
    let spec = &state.spec;
    let k_max = spec.num_hops;

    let (cache, pre) = match spec.kind {
        ModelKind::RMlp | ModelKind::RSgc => {
            let hop = if spec.kind == ModelKind::RMlp { 0 } else { k_max };
            let (input, pre) = project_hop(state, stack, batch, hop);
            (
                Cache::Feedforward {
                    input,
                    pre: pre.clone(),
                },
                pre,
            )
        }
        ModelKind::RSign => {
            let mut inputs = Vec::with_capacity(k_max + 1);
            let mut pre = DMat::zeros(batch.len(), (k_max + 1) * spec.hidden_dim);
            for k in 0..=k_max {
                let (input, projected) = project_hop(state, stack, batch, k);
                for i in 0..batch.len() {
                    let seg = &mut pre.row_mut(i)
                        [k * spec.hidden_dim..(k + 1) * spec.hidden_dim];
                    seg.copy_from_slice(projected.row(i));
                }
                inputs.push(input);
            }
            (
                Cache::Sign {
                    inputs,
                    pre: pre.clone(),
                },
                pre,
            )
        }
        ModelKind::RSagn => {
            let mut inputs = Vec::with_capacity(k_max + 1);
            let mut projected = Vec::with_capacity(k_max + 1);
            for k in 0..=k_max {
                let (input, proj) = project_hop(state, stack, batch, k);
                inputs.push(input);
                projected.push(proj);
            }
            let attn_hop = &state.tensor("attn_hop").data;
            let attn_base = &state.tensor("attn_base").data;
            let base_scores = projected[0].matvec(attn_base);
            let mut scores_pre = Vec::with_capacity(k_max + 1);
            for proj in &projected {
                let hop_scores = proj.matvec(attn_hop);
                scores_pre.push(
                    hop_scores
                        .iter()
                        .zip(&base_scores)
                        .map(|(h, b)| h + b)
                        .collect::<Vec<f64>>(),
                );
            }
            // Per-node softmax over hops of the leaky-relu'd scores.
            let mut alpha = DMat::zeros(batch.len(), k_max + 1);
            for i in 0..batch.len() {
                let mut s: Vec<f64> = scores_pre
                    .iter()
                    .map(|col| leaky_relu_scalar(col[i]))
                    .collect();
                let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for v in &mut s {
                    *v = (*v - max).exp();
                    sum += *v;
                }
                for (k, v) in s.iter().enumerate() {
                    alpha.row_mut(i)[k] = v / sum;
                }
            }
            let mut pre = DMat::zeros(batch.len(), spec.hidden_dim);
            for k in 0..=k_max {
                for i in 0..batch.len() {
                    let a = alpha.row(i)[k];
                    for (o, p) in pre.row_mut(i).iter_mut().zip(projected[k].row(i)) {
                        *o += a * p;
                    }
                }
            }
            (
                Cache::Sagn {
                    inputs,
                    projected,
                    scores_pre,
                    alpha,
                    pre: pre.clone(),
                },
                pre,
            )
        }
        ModelKind::RGamlp => {
            let mut inputs = Vec::with_capacity(k_max + 1);
            let mut projected = Vec::with_capacity(k_max + 1);
            for k in 0..=k_max {
                let (input, proj) = project_hop(state, stack, batch, k);
                inputs.push(input);
                projected.push(proj);
            }
            let gate_prev = &state.tensor("gate_prev").data;
            let gate_cur = &state.tensor("gate_cur").data;
            let gate_bias = state.tensor("gate_bias").data[0];
            let mut running = vec![projected[0].clone()];
            let mut gates_pre = Vec::with_capacity(k_max);
            let mut gates = Vec::with_capacity(k_max);
            for k in 1..=k_max {
                let prev = running.last().unwrap();
                let from_prev = prev.matvec(gate_prev);
                let from_cur = projected[k].matvec(gate_cur);
                let pre_gate: Vec<f64> = from_prev
                    .iter()
                    .zip(&from_cur)
                    .map(|(a, b)| a + b + gate_bias)
                    .collect();
                let gate: Vec<f64> = pre_gate.iter().map(|&t| sigmoid(t)).collect();
                let mut next = prev.clone();
                for i in 0..batch.len() {
                    let g = gate[i];
                    for (o, p) in next.row_mut(i).iter_mut().zip(projected[k].row(i)) {
                        *o += g * p;
                    }
                }
                running.push(next);
                gates_pre.push(pre_gate);
                gates.push(gate);
            }
            let pre = running.last().unwrap().clone();
            (
                Cache::Gamlp {
                    inputs,
                    projected,
                    running,
                    gates_pre,
                    gates,
                },
                pre,
            )
        }
    };

    let mut hidden = relu(&pre);
    if let Some(mask) = &dropout_mask {
        for (h, m) in hidden.data.iter_mut().zip(&mask.data) {
            *h *= m;
        }
    }
    let mut logits = hidden.matmul(state.tensor("out_w"));
    logits.add_bias(&state.tensor("out_b").data);
    if let Some(pos) = logits.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            row: pos / logits.cols,
            col: pos % logits.cols,
        });
    }
    let probs = DMat {
        rows: logits.rows,
        cols: logits.cols,
        data: logits.data.iter().map(|&v| sigmoid(v)).collect(),
    };
    Ok(ForwardPass {
        cache,
        hidden,
        dropout_mask,
        probs,
    })
}

/// Eval-mode forward pass: per-node class probabilities in (0, 1).
/// Pure: repeated calls with the same inputs agree bitwise.
pub fn forward(state: &ModelState, stack: &PropagationStack, batch: &[u64]) -> Result<DMat> {
    Ok(forward_cached(state, stack, batch, None)?.probs)
}

/// Adds `scale[i] * vec` to every row i of `target`.
fn add_outer(target: &mut DMat, scale: &[f64], vec: &[f64]) {
    for i in 0..target.rows {
        let s = scale[i];
        if s == 0.0 {
            continue;
        }
        for (t, v) in target.row_mut(i).iter_mut().zip(vec) {
            *t += s * v;
        }
    }
}

/// Accumulates `Σ_i scale[i] * m[i, :]` into `acc`.
fn add_scaled_rowsum(acc: &mut [f64], scale: &[f64], m: &DMat) {
    for i in 0..m.rows {
        let s = scale[i];
        if s == 0.0 {
            continue;
        }
        for (a, v) in acc.iter_mut().zip(m.row(i)) {
            *a += s * v;
        }
    }
}

/// Gradients for every parameter tensor, in parameter order, given the
/// loss gradient with respect to the logits.
pub(crate) fn backward(state: &ModelState, pass: &ForwardPass, dlogits: &DMat) -> Vec<DMat> {
    let spec = &state.spec;
    let mut grads: Vec<DMat> = state
        .params
        .iter()
        .map(|t| DMat::zeros(t.mat.rows, t.mat.cols))
        .collect();
    let idx = |name: &str| state.tensor_index(name);

    // Output head.
    grads[idx("out_w")] = pass.hidden.t_matmul(dlogits);
    grads[idx("out_b")].data = dlogits.col_sums();
    let mut d_hidden = dlogits.matmul_t(state.tensor("out_w"));
    if let Some(mask) = &pass.dropout_mask {
        for (g, m) in d_hidden.data.iter_mut().zip(&mask.data) {
            *g *= m;
        }
    }

    match &pass.cache {
        Cache::Feedforward { input, pre } => {
            let d_pre = relu_backward(&d_hidden, pre);
            let hop = if spec.kind == ModelKind::RMlp {
                0
            } else {
                spec.num_hops
            };
            grads[idx(&format!("theta_{hop}"))] = input.t_matmul(&d_pre);
            grads[idx(&format!("bias_{hop}"))].data = d_pre.col_sums();
        }
        Cache::Sign { inputs, pre } => {
            let d_pre = relu_backward(&d_hidden, pre);
            let h = spec.hidden_dim;
            for k in 0..=spec.num_hops {
                let mut seg = DMat::zeros(d_pre.rows, h);
                for i in 0..d_pre.rows {
                    seg.row_mut(i)
                        .copy_from_slice(&d_pre.row(i)[k * h..(k + 1) * h]);
                }
                grads[idx(&format!("theta_{k}"))] = inputs[k].t_matmul(&seg);
                grads[idx(&format!("bias_{k}"))].data = seg.col_sums();
            }
        }
        Cache::Sagn {
            inputs,
            projected,
            scores_pre,
            alpha,
            pre,
        } => {
            let d_combined = relu_backward(&d_hidden, pre);
            let hops = spec.num_hops + 1;
            let rows = d_combined.rows;

            // d alpha_{ik} = <d_combined[i], projected_k[i]>.
            let mut d_alpha = DMat::zeros(rows, hops);
            for k in 0..hops {
                let dots = d_combined.row_dots(&projected[k]);
                for i in 0..rows {
                    d_alpha.row_mut(i)[k] = dots[i];
                }
            }
            // Softmax backward per node, then through the leaky relu.
            let mut d_score = vec![vec![0.0f64; rows]; hops];
            for i in 0..rows {
                let a = alpha.row(i);
                let da = d_alpha.row(i);
                let inner: f64 = a.iter().zip(da).map(|(x, y)| x * y).sum();
                for k in 0..hops {
                    let ds = a[k] * (da[k] - inner);
                    d_score[k][i] = ds * leaky_relu_grad_scalar(scores_pre[k][i]);
                }
            }

            let attn_hop = &state.tensor("attn_hop").data;
            let attn_base = &state.tensor("attn_base").data;
            let mut d_attn_hop = vec![0.0f64; spec.hidden_dim];
            let mut d_attn_base = vec![0.0f64; spec.hidden_dim];
            let mut d_projected: Vec<DMat> = (0..hops)
                .map(|_| DMat::zeros(rows, spec.hidden_dim))
                .collect();

            for k in 0..hops {
                // Through the combination: alpha_k-scaled d_combined.
                for i in 0..rows {
                    let a = alpha.row(i)[k];
                    for (dp, dc) in d_projected[k]
                        .row_mut(i)
                        .iter_mut()
                        .zip(d_combined.row(i))
                    {
                        *dp += a * dc;
                    }
                }
                // Through the score terms.
                add_outer(&mut d_projected[k], &d_score[k], attn_hop);
                add_outer(&mut d_projected[0], &d_score[k], attn_base);
                add_scaled_rowsum(&mut d_attn_hop, &d_score[k], &projected[k]);
                add_scaled_rowsum(&mut d_attn_base, &d_score[k], &projected[0]);
            }

            grads[idx("attn_hop")].data = d_attn_hop;
            grads[idx("attn_base")].data = d_attn_base;
            for k in 0..hops {
                grads[idx(&format!("theta_{k}"))] = inputs[k].t_matmul(&d_projected[k]);
                grads[idx(&format!("bias_{k}"))].data = d_projected[k].col_sums();
            }
        }
        Cache::Gamlp {
            inputs,
            projected,
            running,
            gates_pre,
            gates,
        } => {
            let k_max = spec.num_hops;
            let rows = d_hidden.rows;
            let gate_prev = &state.tensor("gate_prev").data;
            let gate_cur = &state.tensor("gate_cur").data;
            let mut d_gate_prev = vec![0.0f64; spec.hidden_dim];
            let mut d_gate_cur = vec![0.0f64; spec.hidden_dim];
            let mut d_gate_bias = 0.0f64;
            let mut d_projected: Vec<DMat> = (0..=k_max)
                .map(|_| DMat::zeros(rows, spec.hidden_dim))
                .collect();

            // running[k_max] feeds the relu head.
            let mut d_running = relu_backward(&d_hidden, &running[k_max]);
            for k in (1..=k_max).rev() {
                let gate = &gates[k - 1];
                let gate_pre = &gates_pre[k - 1];
                // d gate_i = <d_running[i], projected_k[i]>.
                let d_gate = d_running.row_dots(&projected[k]);
                // Direct path into hop k.
                for i in 0..rows {
                    let g = gate[i];
                    for (dp, dr) in d_projected[k]
                        .row_mut(i)
                        .iter_mut()
                        .zip(d_running.row(i))
                    {
                        *dp += g * dr;
                    }
                }
                let d_pre_gate: Vec<f64> = d_gate
                    .iter()
                    .zip(gate_pre)
                    .map(|(dg, &t)| {
                        let s = sigmoid(t);
                        dg * s * (1.0 - s)
                    })
                    .collect();
                add_outer(&mut d_projected[k], &d_pre_gate, gate_cur);
                add_scaled_rowsum(&mut d_gate_cur, &d_pre_gate, &projected[k]);
                add_scaled_rowsum(&mut d_gate_prev, &d_pre_gate, &running[k - 1]);
                d_gate_bias += d_pre_gate.iter().sum::<f64>();
                // Gradient flowing into running[k-1]: identity plus gate term.
                add_outer(&mut d_running, &d_pre_gate, gate_prev);
            }
            // running[0] is projected[0].
            for (dp, dr) in d_projected[0].data.iter_mut().zip(&d_running.data) {
                *dp += dr;
            }

            grads[idx("gate_prev")].data = d_gate_prev;
            grads[idx("gate_cur")].data = d_gate_cur;
            grads[idx("gate_bias")].data = vec![d_gate_bias];
            for k in 0..=k_max {
                grads[idx(&format!("theta_{k}"))] = inputs[k].t_matmul(&d_projected[k]);
                grads[idx(&format!("bias_{k}"))].data = d_projected[k].col_sums();
            }
        }
    }

    grads
}

#[cfg(test)]
mod tests {
    use super::super::{bce_loss, ModelSpec};
    use super::*;
    use crate::labels::LabelMatrix;
    use crate::matrix::FeatureMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_stack(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> PropagationStack {
        let hops = (0..=k)
            .map(|_| {
                let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
                FeatureMatrix::from_data(n, d, data).unwrap()
            })
            .collect();
        PropagationStack::new(hops).unwrap()
    }

    fn toy_labels(rng: &mut ChaCha8Rng, n: u64, q: u32) -> LabelMatrix {
        let lists = (0..n)
            .map(|v| {
                let count = rng.gen_range(1..=2usize);
                (v, (0..count).map(|_| rng.gen_range(0..q)).collect())
            })
            .collect();
        LabelMatrix::from_lists(lists, n, q).unwrap()
    }

    fn spec_for(kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            input_dim: 4,
            hidden_dim: 5,
            class_count: 3,
            num_hops: 2,
            dropout_rate: 0.0,
            seed: 11,
        }
    }

    #[test]
    fn zero_weights_give_half_probabilities() {
        for kind in ModelKind::ALL {
            let mut state = ModelState::init(spec_for(kind)).unwrap();
            for t in &mut state.params {
                t.mat.data.fill(0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let stack = toy_stack(&mut rng, 6, 4, 2);
            let probs = forward(&state, &stack, &[0, 3, 5]).unwrap();
            assert!(probs.data.iter().all(|&p| p == 0.5), "{kind}");
        }
    }

    #[test]
    fn sgc_ignores_earlier_hops() {
        let state = ModelState::init(spec_for(ModelKind::RSgc)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stack = toy_stack(&mut rng, 8, 4, 2);
        let batch: Vec<u64> = (0..8).collect();
        let base = forward(&state, &stack, &batch).unwrap();

        // Perturb hops 0..K-1; the last hop alone must decide the output.
        let mut hops: Vec<FeatureMatrix> = stack.hops().to_vec();
        for hop in hops.iter_mut().take(2) {
            for v in hop.data_mut() {
                *v += 3.5;
            }
        }
        let perturbed = PropagationStack::new(hops).unwrap();
        let same = forward(&state, &perturbed, &batch).unwrap();
        assert_eq!(base.data, same.data);
    }

    #[test]
    fn mlp_ignores_later_hops() {
        let state = ModelState::init(spec_for(ModelKind::RMlp)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack = toy_stack(&mut rng, 8, 4, 2);
        let batch: Vec<u64> = (0..8).collect();
        let base = forward(&state, &stack, &batch).unwrap();
        let mut hops: Vec<FeatureMatrix> = stack.hops().to_vec();
        for hop in hops.iter_mut().skip(1) {
            for v in hop.data_mut() {
                *v -= 1.25;
            }
        }
        let perturbed = PropagationStack::new(hops).unwrap();
        assert_eq!(base.data, forward(&state, &perturbed, &batch).unwrap().data);
    }

    #[test]
    fn eval_forward_is_pure() {
        for kind in ModelKind::ALL {
            let state = ModelState::init(spec_for(kind)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            let stack = toy_stack(&mut rng, 10, 4, 2);
            let batch: Vec<u64> = vec![1, 4, 7];
            let a = forward(&state, &stack, &batch).unwrap();
            let b = forward(&state, &stack, &batch).unwrap();
            assert_eq!(a.data, b.data, "{kind}");
            assert!(a.data.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn sagn_attention_sums_to_one() {
        let state = ModelState::init(spec_for(ModelKind::RSagn)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stack = toy_stack(&mut rng, 10, 4, 2);
        let batch: Vec<u64> = (0..10).collect();
        let pass = forward_cached(&state, &stack, &batch, None).unwrap();
        match &pass.cache {
            Cache::Sagn { alpha, .. } => {
                for i in 0..alpha.rows {
                    let sum: f64 = alpha.row(i).iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-6, "node {i}: {sum}");
                }
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn mlp_forward_matches_scalar_oracle() {
        let spec = spec_for(ModelKind::RMlp);
        let state = ModelState::init(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let stack = toy_stack(&mut rng, 20, 4, 2);
        let batch: Vec<u64> = (0..20).collect();
        let got = forward(&state, &stack, &batch).unwrap();

        // Straight-line scalar re-implementation of the same pass.
        let theta = state.tensor("theta_0");
        let bias = state.tensor("bias_0");
        let out_w = state.tensor("out_w");
        let out_b = state.tensor("out_b");
        for (i, &node) in batch.iter().enumerate() {
            let x = stack.hop(0).row(node as usize);
            let mut z = vec![0.0f64; spec.hidden_dim];
            for jj in 0..spec.hidden_dim {
                let mut acc = bias.data[jj];
                for (ii, &xv) in x.iter().enumerate() {
                    acc += xv as f64 * theta.data[ii * spec.hidden_dim + jj];
                }
                z[jj] = acc.max(0.0);
            }
            for c in 0..spec.class_count {
                let mut acc = out_b.data[c];
                for (jj, &zv) in z.iter().enumerate() {
                    acc += zv * out_w.data[jj * spec.class_count + c];
                }
                let expected = 1.0 / (1.0 + (-acc).exp());
                let gotv = got.row(i)[c];
                assert!((gotv - expected).abs() < 1e-12, "node {i} class {c}");
            }
        }
    }

    /// Central finite differences over every parameter element.
    fn gradient_check(kind: ModelKind) {
        let spec = spec_for(kind);
        let mut state = ModelState::init(spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stack = toy_stack(&mut rng, 10, 4, 2);
        let labels = toy_labels(&mut rng, 10, 3);
        let batch: Vec<u64> = (0..10).collect();

        let loss_of = |state: &ModelState| {
            let pass = forward_cached(state, &stack, &batch, None).unwrap();
            bce_loss(&pass.probs, &batch, &labels).unwrap().0
        };

        let pass = forward_cached(&state, &stack, &batch, None).unwrap();
        let (_, d_probs) = bce_loss(&pass.probs, &batch, &labels).unwrap();
        let mut d_logits = DMat::zeros(d_probs.rows, d_probs.cols);
        for (dl, (dp, p)) in d_logits
            .data
            .iter_mut()
            .zip(d_probs.data.iter().zip(&pass.probs.data))
        {
            *dl = dp * p * (1.0 - p);
        }
        let grads = backward(&state, &pass, &d_logits);

        let h = 1e-5;
        for t_idx in 0..state.params.len() {
            for e_idx in 0..state.params[t_idx].mat.data.len() {
                let orig = state.params[t_idx].mat.data[e_idx];
                state.params[t_idx].mat.data[e_idx] = orig + h;
                let up = loss_of(&state);
                state.params[t_idx].mat.data[e_idx] = orig - h;
                let down = loss_of(&state);
                state.params[t_idx].mat.data[e_idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads[t_idx].data[e_idx];
                if fd.abs() < 1e-10 && an.abs() < 1e-10 {
                    continue;
                }
                let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
                assert!(
                    rel <= 1e-4,
                    "{kind} tensor {} element {e_idx}: fd {fd} vs analytic {an} (rel {rel})",
                    state.params[t_idx].name,
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_r_mlp() {
        gradient_check(ModelKind::RMlp);
    }

    #[test]
    fn gradients_match_finite_differences_r_sgc() {
        gradient_check(ModelKind::RSgc);
    }

    #[test]
    fn gradients_match_finite_differences_r_sign() {
        gradient_check(ModelKind::RSign);
    }

    #[test]
    fn gradients_match_finite_differences_r_sagn() {
        gradient_check(ModelKind::RSagn);
    }

    #[test]
    fn gradients_match_finite_differences_r_gamlp() {
        gradient_check(ModelKind::RGamlp);
    }

    #[test]
    fn rejects_wrong_stack_shape() {
        let state = ModelState::init(spec_for(ModelKind::RSign)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let short = toy_stack(&mut rng, 6, 4, 1);
        assert!(forward(&state, &short, &[0]).is_err());
        let wrong_dim = toy_stack(&mut rng, 6, 3, 2);
        assert!(forward(&state, &wrong_dim, &[0]).is_err());
        let ok = toy_stack(&mut rng, 6, 4, 2);
        assert!(forward(&state, &ok, &[6]).is_err());
    }
}
