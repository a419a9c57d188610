//! Batched, differentiable graphs for the network forwards.
//!
//! Training evaluates whole batches on the tape. Because parameter fusion
//! is linear, `x @ (sum_n alpha_n W_n) = sum_n alpha_n (x @ W_n)`, so the
//! per-sample synthesized forward blends per-expert pre-activations layer
//! by layer instead of materialising one fused weight matrix per sample.
//! A unit test pins this route to the explicit fuse-then-forward path.

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;
use crate::nets::{ActionBound, ParamSet, LOG_STD_MAX, LOG_STD_MIN};
use std::f64::consts::{LN_2, PI};

/// One MLP registered on a tape as six leaf parameters.
#[derive(Debug, Clone, Copy)]
pub struct TapedMlp {
    pub w0: Var,
    pub b0: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl TapedMlp {
    pub fn register(tape: &mut Tape, p: &ParamSet) -> TapedMlp {
        TapedMlp {
            w0: tape.leaf_from(&p.w0),
            b0: tape.leaf_from(&p.b0),
            w1: tape.leaf_from(&p.w1),
            b1: tape.leaf_from(&p.b1),
            w2: tape.leaf_from(&p.w2),
            b2: tape.leaf_from(&p.b2),
        }
    }

    /// Register with gradients disabled (frozen network on this tape).
    pub fn register_const(tape: &mut Tape, p: &ParamSet) -> TapedMlp {
        TapedMlp {
            w0: tape.leaf_const_from(&p.w0),
            b0: tape.leaf_const_from(&p.b0),
            w1: tape.leaf_const_from(&p.w1),
            b1: tape.leaf_const_from(&p.b1),
            w2: tape.leaf_const_from(&p.w2),
            b2: tape.leaf_const_from(&p.b2),
        }
    }

    pub fn vars(&self) -> [Var; 6] {
        [self.w0, self.b0, self.w1, self.b1, self.w2, self.b2]
    }

    /// ReLU -> ReLU -> linear over a batch (rows = samples).
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let z0 = tape.matmul(x, self.w0)?;
        let z0 = tape.add_row(z0, self.b0)?;
        let h0 = tape.relu(z0)?;
        let z1 = tape.matmul(h0, self.w1)?;
        let z1 = tape.add_row(z1, self.b1)?;
        let h1 = tape.relu(z1)?;
        let z2 = tape.matmul(h1, self.w2)?;
        tape.add_row(z2, self.b2)
    }

    /// Gradients for the six parameter tensors after `backward`.
    pub fn grads(&self, tape: &Tape) -> [Tensor; 6] {
        self.vars().map(|v| tape.grad_tensor(v))
    }
}

/// Gating forward plus row softmax: batch of simplex weights.
pub fn gating_alpha(tape: &mut Tape, gating: &TapedMlp, gating_state: Var) -> Result<Var> {
    let logits = gating.forward(tape, gating_state)?;
    tape.row_softmax(logits)
}

/// Per-sample synthesized forward via layerwise pre-activation blending.
pub fn fused_policy_forward(
    tape: &mut Tape,
    experts: &[TapedMlp],
    alpha: Var,
    x: Var,
) -> Result<Var> {
    let blend_layer = |tape: &mut Tape, inputs: &[Var]| tape.blend(inputs, alpha);

    let mut z0 = Vec::with_capacity(experts.len());
    for e in experts {
        let z = tape.matmul(x, e.w0)?;
        z0.push(tape.add_row(z, e.b0)?);
    }
    let h0 = blend_layer(tape, &z0)?;
    let h0 = tape.relu(h0)?;

    let mut z1 = Vec::with_capacity(experts.len());
    for e in experts {
        let z = tape.matmul(h0, e.w1)?;
        z1.push(tape.add_row(z, e.b1)?);
    }
    let h1 = blend_layer(tape, &z1)?;
    let h1 = tape.relu(h1)?;

    let mut z2 = Vec::with_capacity(experts.len());
    for e in experts {
        let z = tape.matmul(h1, e.w2)?;
        z2.push(tape.add_row(z, e.b2)?);
    }
    blend_layer(tape, &z2)
}

/// Mixture baseline: each expert runs its own full forward and the raw
/// head outputs are blended by alpha.
pub fn moe_policy_forward(
    tape: &mut Tape,
    experts: &[TapedMlp],
    alpha: Var,
    x: Var,
) -> Result<Var> {
    let mut outs = Vec::with_capacity(experts.len());
    for e in experts {
        outs.push(e.forward(tape, x)?);
    }
    tape.blend(&outs, alpha)
}

/// Split the raw head batch into (mean, clamped log-std), each m x d.
pub fn split_head_batch(tape: &mut Tape, raw: Var) -> Result<(Var, Var)> {
    let cols = tape.value(raw).cols();
    let d = cols / 2;
    let mean = tape.slice_cols(raw, 0, d)?;
    let log_std_raw = tape.slice_cols(raw, d, d)?;
    let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)?;
    Ok((mean, log_std))
}

/// Deterministic squashed-and-scaled mean action (m x d).
pub fn mean_action_batch(tape: &mut Tape, mean: Var, bound: &ActionBound) -> Result<Var> {
    let t = tape.tanh(mean)?;
    let scaled = tape.mul_row_const(t, bound.halves())?;
    let mids = tape.leaf_const(Tensor::vector(bound.mids())?);
    tape.add_row(scaled, mids)
}

/// Reparametrised squashed Gaussian sample and its log-probability.
pub struct SquashedSample {
    /// Scaled action, m x d.
    pub action: Var,
    /// Log-probability per sample, m x 1.
    pub log_prob: Var,
}

/// Build `u = mean + exp(log_std) * eps`, squash, scale, and accumulate the
/// per-row log-probability (Gaussian log-density of u minus the tanh
/// change-of-variables correction, in the cancellation-free form).
pub fn squash_and_logprob(
    tape: &mut Tape,
    mean: Var,
    log_std: Var,
    eps: &Tensor,
    bound: &ActionBound,
) -> Result<SquashedSample> {
    let eps_leaf = tape.leaf_const_from(eps);
    let std = tape.exp(log_std)?;
    let noise = tape.mul(std, eps_leaf)?;
    let u = tape.add(mean, noise)?;

    let tanh_u = tape.tanh(u)?;
    let scaled = tape.mul_row_const(tanh_u, bound.halves())?;
    let mids = tape.leaf_const(Tensor::vector(bound.mids())?);
    let action = tape.add_row(scaled, mids)?;

    // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
    let neg2u = tape.scale(u, -2.0)?;
    let sp = tape.softplus(neg2u)?;
    let u_plus_sp = tape.add(u, sp)?;
    let shifted = tape.add_const(u_plus_sp, -LN_2)?;
    let corr = tape.scale(shifted, -2.0)?;

    // Gaussian part: -0.5 eps^2 - 0.5 ln(2 pi) is constant given eps.
    let const_part: Vec<f64> = eps
        .data()
        .iter()
        .map(|&e| -0.5 * e * e - 0.5 * (2.0 * PI).ln())
        .collect();
    let const_leaf = tape.leaf_const(Tensor::new(eps.shape().to_vec(), const_part)?);
    let gauss = tape.sub(const_leaf, log_std)?;

    let per_elem = tape.sub(gauss, corr)?;
    let log_prob = tape.row_sum(per_elem)?;
    Ok(SquashedSample { action, log_prob })
}
