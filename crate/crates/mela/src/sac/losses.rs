//! The SAC update rules: twin-critic regression against entropy-adjusted
//! targets, the actor objective with the smoothing penalty, temperature
//! adaptation, and soft target tracking.

use crate::autodiff::tape::matmul_into;
use crate::autodiff::{softmax_stable, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::batched::{
    fused_policy_forward, gating_alpha, mean_action_batch, moe_policy_forward, split_head_batch,
    squash_and_logprob, TapedMlp,
};
use crate::env::ObsLayout;
use crate::error::{Error, Result};
use crate::fusion::{moe_forward, synthesized_forward, ExpertBank};
use crate::nets::{
    mlp_forward, split_head, squash_with_noise, standard_normal, ActionBound, ParamSet,
    PolicyOutput, LOG_STD_MAX, LOG_STD_MIN,
};
use crate::sac::{Arch, Temperature, TrainConfig};
use rand::Rng;

/// The learnable policy: one expert, parameter-fused experts, or the
/// output-blending mixture baseline.
#[derive(Debug, Clone)]
pub enum Policy {
    Single(ParamSet),
    Fused(ExpertBank),
    Blended(ExpertBank),
}

impl Policy {
    pub fn arch(&self) -> Arch {
        match self {
            Policy::Single(_) => Arch::Single,
            Policy::Fused(_) => Arch::Mela,
            Policy::Blended(_) => Arch::Moe,
        }
    }

    pub fn bank(&self) -> Option<&ExpertBank> {
        match self {
            Policy::Single(_) => None,
            Policy::Fused(b) | Policy::Blended(b) => Some(b),
        }
    }

    /// Single-state forward used on the rollout path.
    pub fn head(
        &self,
        gating_state: Option<&[f64]>,
        policy_state: &[f64],
    ) -> Result<(PolicyOutput, Option<Vec<f64>>)> {
        match self {
            Policy::Single(p) => Ok((split_head(&mlp_forward(p, policy_state)?)?, None)),
            Policy::Fused(bank) => {
                let gs = gating_state
                    .ok_or_else(|| Error::contract("policy_head", "fused policy needs a gating state"))?;
                let (out, alpha) = synthesized_forward(bank, gs, policy_state)?;
                Ok((out, Some(alpha.as_slice().to_vec())))
            }
            Policy::Blended(bank) => {
                let gs = gating_state
                    .ok_or_else(|| Error::contract("policy_head", "blended policy needs a gating state"))?;
                let (out, alpha) = moe_forward(bank, gs, policy_state)?;
                Ok((out, Some(alpha.as_slice().to_vec())))
            }
        }
    }

    /// Trainable tensors in a stable order (experts then gating).
    pub fn param_sizes(&self) -> Vec<usize> {
        self.with_params(|ts| ts.iter().map(|t| t.numel()).collect())
    }

    fn with_params<R>(&self, f: impl FnOnce(Vec<&Tensor>) -> R) -> R {
        match self {
            Policy::Single(p) => f(p.tensors().to_vec()),
            Policy::Fused(b) | Policy::Blended(b) => {
                let mut v = Vec::with_capacity((b.experts.len() + 1) * 6);
                for e in &b.experts {
                    v.extend(e.tensors());
                }
                v.extend(b.gating.tensors());
                f(v)
            }
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            Policy::Single(p) => p.tensors_mut().into_iter().collect(),
            Policy::Fused(b) | Policy::Blended(b) => {
                let mut v = Vec::with_capacity((b.experts.len() + 1) * 6);
                for e in &mut b.experts {
                    v.extend(e.tensors_mut());
                }
                v.extend(b.gating.tensors_mut());
                v
            }
        }
    }
}

/// All networks one SAC run owns.
#[derive(Debug, Clone)]
pub struct SacNets {
    pub policy: Policy,
    pub critic1: ParamSet,
    pub critic2: ParamSet,
    pub target1: ParamSet,
    pub target2: ParamSet,
    pub temperature: Temperature,
}

impl SacNets {
    pub fn new(policy: Policy, critic1: ParamSet, critic2: ParamSet, temperature: Temperature) -> Self {
        let target1 = critic1.clone();
        let target2 = critic2.clone();
        SacNets {
            policy,
            critic1,
            critic2,
            target1,
            target2,
            temperature,
        }
    }
}

/// One Adam state per parameter group.
pub struct Optimizers {
    pub actor: AdamState,
    pub critic1: AdamState,
    pub critic2: AdamState,
    pub temperature: AdamState,
}

impl Optimizers {
    pub fn new(nets: &SacNets, cfg: &TrainConfig) -> Result<Self> {
        let adam = |sizes: &[usize], wd: f64| {
            AdamState::new(AdamConfig::new(cfg.learning_rate, wd), sizes)
        };
        let critic_sizes: Vec<usize> = nets.critic1.tensors().iter().map(|t| t.numel()).collect();
        Ok(Optimizers {
            actor: adam(&nets.policy.param_sizes(), cfg.weight_decay)?,
            critic1: adam(&critic_sizes, cfg.weight_decay)?,
            critic2: adam(&critic_sizes, cfg.weight_decay)?,
            temperature: adam(&[1], 0.0)?,
        })
    }
}

// ── plain batched forwards (no gradients) ───────────────────────────────

/// relu -> relu -> linear over a row-major batch.
pub(crate) fn batch_mlp_plain(p: &ParamSet, x: &[f64], m: usize) -> Vec<f64> {
    let spec = p.spec();
    let mut h0 = vec![0.0; m * spec.hidden];
    matmul_into(x, p.w0.data(), &mut h0, m, spec.input, spec.hidden);
    add_row_relu(&mut h0, p.b0.data());
    let mut h1 = vec![0.0; m * spec.hidden];
    matmul_into(&h0, p.w1.data(), &mut h1, m, spec.hidden, spec.hidden);
    add_row_relu(&mut h1, p.b1.data());
    let mut out = vec![0.0; m * spec.output];
    matmul_into(&h1, p.w2.data(), &mut out, m, spec.hidden, spec.output);
    add_row(&mut out, p.b2.data());
    out
}

fn add_row(x: &mut [f64], bias: &[f64]) {
    let n = bias.len();
    for (i, v) in x.iter_mut().enumerate() {
        *v += bias[i % n];
    }
}

fn add_row_relu(x: &mut [f64], bias: &[f64]) {
    let n = bias.len();
    for (i, v) in x.iter_mut().enumerate() {
        *v = (*v + bias[i % n]).max(0.0);
    }
}

/// Batched policy head without a tape: (means, clamped log-stds, alpha).
pub(crate) fn batch_policy_plain(
    policy: &Policy,
    gating_x: Option<&[f64]>,
    policy_x: &[f64],
    m: usize,
) -> Result<(Vec<f64>, Vec<f64>, Option<Vec<f64>>)> {
    let raw_and_alpha = match policy {
        Policy::Single(p) => (batch_mlp_plain(p, policy_x, m), None),
        Policy::Fused(bank) => {
            let gx = gating_x.ok_or_else(|| Error::contract("batch_policy", "missing gating batch"))?;
            let alpha = batch_alpha_plain(bank, gx, m);
            let raw = batch_fused_plain(bank, &alpha, policy_x, m);
            (raw, Some(alpha))
        }
        Policy::Blended(bank) => {
            let gx = gating_x.ok_or_else(|| Error::contract("batch_policy", "missing gating batch"))?;
            let alpha = batch_alpha_plain(bank, gx, m);
            let y = bank.expert_spec().output;
            let mut raw = vec![0.0; m * y];
            for (n, e) in bank.experts.iter().enumerate() {
                let out = batch_mlp_plain(e, policy_x, m);
                for r in 0..m {
                    let w = alpha[r * bank.num_experts() + n];
                    for c in 0..y {
                        raw[r * y + c] += w * out[r * y + c];
                    }
                }
            }
            (raw, Some(alpha))
        }
    };
    let (raw, alpha) = raw_and_alpha;
    let y = raw.len() / m;
    let d = y / 2;
    let mut means = Vec::with_capacity(m * d);
    let mut log_stds = Vec::with_capacity(m * d);
    for r in 0..m {
        means.extend_from_slice(&raw[r * y..r * y + d]);
        log_stds.extend(
            raw[r * y + d..(r + 1) * y]
                .iter()
                .map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)),
        );
    }
    Ok((means, log_stds, alpha))
}

fn batch_alpha_plain(bank: &ExpertBank, gating_x: &[f64], m: usize) -> Vec<f64> {
    let logits = batch_mlp_plain(&bank.gating, gating_x, m);
    let n = bank.num_experts();
    let mut alpha = Vec::with_capacity(m * n);
    for r in 0..m {
        alpha.extend(softmax_stable(&logits[r * n..(r + 1) * n]));
    }
    alpha
}

/// Layerwise pre-activation blend, mirroring the taped route.
fn batch_fused_plain(bank: &ExpertBank, alpha: &[f64], x: &[f64], m: usize) -> Vec<f64> {
    let spec = bank.expert_spec();
    let n = bank.num_experts();
    let blend_layer = |inputs: &[Vec<f64>], width: usize| -> Vec<f64> {
        let mut out = vec![0.0; m * width];
        for (k, part) in inputs.iter().enumerate() {
            for r in 0..m {
                let w = alpha[r * n + k];
                for c in 0..width {
                    out[r * width + c] += w * part[r * width + c];
                }
            }
        }
        out
    };
    let layer = |input: &[f64], in_dim: usize, pick: &dyn Fn(&ParamSet) -> (&Tensor, &Tensor), width: usize| {
        bank.experts
            .iter()
            .map(|e| {
                let (w, b) = pick(e);
                let mut z = vec![0.0; m * width];
                matmul_into(input, w.data(), &mut z, m, in_dim, width);
                add_row(&mut z, b.data());
                z
            })
            .collect::<Vec<_>>()
    };

    let z0 = layer(x, spec.input, &|e| (&e.w0, &e.b0), spec.hidden);
    let mut h0 = blend_layer(&z0, spec.hidden);
    h0.iter_mut().for_each(|v| *v = v.max(0.0));
    let z1 = layer(&h0, spec.hidden, &|e| (&e.w1, &e.b1), spec.hidden);
    let mut h1 = blend_layer(&z1, spec.hidden);
    h1.iter_mut().for_each(|v| *v = v.max(0.0));
    let z2 = layer(&h1, spec.hidden, &|e| (&e.w2, &e.b2), spec.output);
    blend_layer(&z2, spec.output)
}

// ── batch marshalling ───────────────────────────────────────────────────

pub(crate) struct BatchArrays {
    pub m: usize,
    pub full: Vec<f64>,
    pub policy: Vec<f64>,
    pub gating: Option<Vec<f64>>,
    pub joints: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<f64>,
    pub next_policy: Vec<f64>,
    pub next_gating: Option<Vec<f64>>,
    pub next_full: Vec<f64>,
}

pub(crate) fn marshal(
    batch: &[&super::Transition],
    layout: &ObsLayout,
    action_dim: usize,
) -> Result<BatchArrays> {
    if batch.is_empty() {
        return Err(Error::contract("marshal_batch", "empty batch"));
    }
    if layout.joint_positions.is_empty() {
        return Err(Error::contract(
            "actor_update",
            "layout does not carry measured joint positions",
        ));
    }
    let m = batch.len();
    let needs_gating = !layout.gating_parts.is_empty();
    let mut out = BatchArrays {
        m,
        full: Vec::with_capacity(m * layout.dim),
        policy: Vec::with_capacity(m * layout.policy.len()),
        gating: needs_gating.then(|| Vec::with_capacity(m * layout.gating_dim())),
        joints: Vec::with_capacity(m * layout.joint_positions.len()),
        actions: Vec::with_capacity(m * action_dim),
        rewards: Vec::with_capacity(m),
        dones: Vec::with_capacity(m),
        next_policy: Vec::with_capacity(m * layout.policy.len()),
        next_gating: needs_gating.then(|| Vec::with_capacity(m * layout.gating_dim())),
        next_full: Vec::with_capacity(m * layout.dim),
    };
    for t in batch {
        if t.state.len() != layout.dim || t.next_state.len() != layout.dim {
            return Err(Error::shape(
                "marshal_batch",
                format!("transition state of {} vs layout {}", t.state.len(), layout.dim),
            ));
        }
        out.full.extend_from_slice(&t.state);
        out.policy.extend(layout.extract_policy(&t.state));
        out.joints.extend_from_slice(&t.state[layout.joint_positions.clone()]);
        out.actions.extend_from_slice(&t.action);
        out.rewards.push(t.reward);
        out.dones.push(if t.done { 1.0 } else { 0.0 });
        out.next_full.extend_from_slice(&t.next_state);
        out.next_policy.extend(layout.extract_policy(&t.next_state));
        if let (Some(g), Some(ng)) = (&mut out.gating, &mut out.next_gating) {
            g.extend(layout.extract_gating(&t.state));
            ng.extend(layout.extract_gating(&t.next_state));
        }
    }
    Ok(out)
}

// ── critic update ───────────────────────────────────────────────────────

/// Entropy-adjusted one-step targets
/// `y = r + gamma (1 - done) (min(Q1', Q2')(s', a') - alpha log pi(a'|s'))`
/// with `a'` freshly sampled from the current policy.
pub(crate) fn critic_targets(
    nets: &SacNets,
    arrays: &BatchArrays,
    bound: &ActionBound,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let m = arrays.m;
    let d = bound.dim();
    let (means, log_stds, _) = batch_policy_plain(
        &nets.policy,
        arrays.next_gating.as_deref(),
        &arrays.next_policy,
        m,
    )?;
    let mut next_actions = Vec::with_capacity(m * d);
    let mut next_logp = Vec::with_capacity(m);
    for r in 0..m {
        let out = PolicyOutput {
            mean_pre_squash: means[r * d..(r + 1) * d].to_vec(),
            log_std: log_stds[r * d..(r + 1) * d].to_vec(),
        };
        let eps: Vec<f64> = (0..d).map(|_| standard_normal(rng)).collect();
        let (a, lp) = squash_with_noise(&out, bound, &eps);
        next_actions.extend(a);
        next_logp.push(lp);
    }

    let sd = arrays.next_full.len() / m;
    let mut x = Vec::with_capacity(m * (sd + d));
    for r in 0..m {
        x.extend_from_slice(&arrays.next_full[r * sd..(r + 1) * sd]);
        x.extend_from_slice(&next_actions[r * d..(r + 1) * d]);
    }
    let q1 = batch_mlp_plain(&nets.target1, &x, m);
    let q2 = batch_mlp_plain(&nets.target2, &x, m);

    let alpha_t = nets.temperature.value();
    Ok((0..m)
        .map(|r| {
            let soft_value = q1[r].min(q2[r]) - alpha_t * next_logp[r];
            arrays.rewards[r] + cfg.discount * (1.0 - arrays.dones[r]) * soft_value
        })
        .collect())
}

/// One regression step of both critics toward the shared targets.
/// Target networks never receive gradients.
pub fn critic_update(
    nets: &mut SacNets,
    opts: &mut Optimizers,
    batch: &[&super::Transition],
    layout: &ObsLayout,
    bound: &ActionBound,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(f64, f64)> {
    let arrays = marshal(batch, layout, bound.dim())?;
    let y = critic_targets(nets, &arrays, bound, cfg, rng)?;
    let m = arrays.m;
    let d = bound.dim();
    let sd = layout.dim;

    let mut x = Vec::with_capacity(m * (sd + d));
    for r in 0..m {
        x.extend_from_slice(&arrays.full[r * sd..(r + 1) * sd]);
        x.extend_from_slice(&arrays.actions[r * d..(r + 1) * d]);
    }

    let mut tape = Tape::new();
    let c1 = TapedMlp::register(&mut tape, &nets.critic1);
    let c2 = TapedMlp::register(&mut tape, &nets.critic2);
    let xv = tape.leaf_const(Tensor::matrix(m, sd + d, x)?);
    let yv = tape.leaf_const(Tensor::matrix(m, 1, y)?);

    let q1 = c1.forward(&mut tape, xv)?;
    let e1 = tape.sub(q1, yv)?;
    let sq1 = tape.mul(e1, e1)?;
    let l1 = tape.mean(sq1)?;
    let q2 = c2.forward(&mut tape, xv)?;
    let e2 = tape.sub(q2, yv)?;
    let sq2 = tape.mul(e2, e2)?;
    let l2 = tape.mean(sq2)?;
    let total = tape.add(l1, l2)?;
    let (v1, v2) = (tape.scalar_value(l1), tape.scalar_value(l2));
    tape.backward(total)?;

    let g1 = c1.grads(&tape);
    let g2 = c2.grads(&tape);
    opts.critic1.step(
        &mut nets.critic1.tensors_mut(),
        &g1.iter().collect::<Vec<_>>(),
    )?;
    opts.critic2.step(
        &mut nets.critic2.tensors_mut(),
        &g2.iter().collect::<Vec<_>>(),
    )?;
    Ok((v1, v2))
}

// ── actor update ────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ActorStats {
    pub loss: f64,
    /// Mean per-sample L2 distance between the deterministic joint
    /// reference and the measured joint positions (before the coefficient).
    pub smoothing_term: f64,
    pub mean_log_prob: f64,
    pub mean_alpha: Option<Vec<f64>>,
}

enum TapedPolicy {
    Single(TapedMlp),
    Bank {
        experts: Vec<TapedMlp>,
        gating: TapedMlp,
        blend_outputs: bool,
    },
}

fn register_policy(tape: &mut Tape, policy: &Policy) -> TapedPolicy {
    match policy {
        Policy::Single(p) => TapedPolicy::Single(TapedMlp::register(tape, p)),
        Policy::Fused(b) | Policy::Blended(b) => TapedPolicy::Bank {
            experts: b.experts.iter().map(|e| TapedMlp::register(tape, e)).collect(),
            gating: TapedMlp::register(tape, &b.gating),
            blend_outputs: matches!(policy, Policy::Blended(_)),
        },
    }
}

impl TapedPolicy {
    fn raw_head(
        &self,
        tape: &mut Tape,
        gating_x: Option<Var>,
        policy_x: Var,
    ) -> Result<(Var, Option<Var>)> {
        match self {
            TapedPolicy::Single(net) => Ok((net.forward(tape, policy_x)?, None)),
            TapedPolicy::Bank {
                experts,
                gating,
                blend_outputs,
            } => {
                let gx = gating_x
                    .ok_or_else(|| Error::contract("actor_update", "missing gating batch"))?;
                let alpha = gating_alpha(tape, gating, gx)?;
                let raw = if *blend_outputs {
                    moe_policy_forward(tape, experts, alpha, policy_x)?
                } else {
                    fused_policy_forward(tape, experts, alpha, policy_x)?
                };
                Ok((raw, Some(alpha)))
            }
        }
    }

    fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        match self {
            TapedPolicy::Single(net) => net.grads(tape).to_vec(),
            TapedPolicy::Bank { experts, gating, .. } => {
                let mut g = Vec::with_capacity((experts.len() + 1) * 6);
                for e in experts {
                    g.extend(e.grads(tape));
                }
                g.extend(gating.grads(tape));
                g
            }
        }
    }
}

/// One actor step on
/// `E[alpha log pi(a|s) - min(Q1, Q2)(s, a)] + c E[|mu(s) - q|_2]`.
/// Gradients reach the gating and every expert through the fusion; the
/// critics participate in the graph but only the policy group is stepped.
pub fn actor_update(
    nets: &mut SacNets,
    opts: &mut Optimizers,
    batch: &[&super::Transition],
    layout: &ObsLayout,
    bound: &ActionBound,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<ActorStats> {
    let arrays = marshal(batch, layout, bound.dim())?;
    let m = arrays.m;
    let d = bound.dim();
    let pd = layout.policy.len();

    let eps_data: Vec<f64> = (0..m * d).map(|_| standard_normal(rng)).collect();
    let eps = Tensor::matrix(m, d, eps_data)?;

    let mut tape = Tape::new();
    let tp = register_policy(&mut tape, &nets.policy);
    // The actor objective reaches the critics only through the action;
    // their own gradients are never applied here, so freeze them.
    let c1 = TapedMlp::register_const(&mut tape, &nets.critic1);
    let c2 = TapedMlp::register_const(&mut tape, &nets.critic2);

    let px = tape.leaf_const(Tensor::matrix(m, pd, arrays.policy.clone())?);
    let gx = match &arrays.gating {
        Some(g) => Some(tape.leaf_const(Tensor::matrix(m, layout.gating_dim(), g.clone())?)),
        None => None,
    };
    let (raw, alpha_var) = tp.raw_head(&mut tape, gx, px)?;
    let (mean, log_std) = split_head_batch(&mut tape, raw)?;
    let sample = squash_and_logprob(&mut tape, mean, log_std, &eps, bound)?;

    let full_leaf = tape.leaf_const(Tensor::matrix(m, layout.dim, arrays.full.clone())?);
    let qin = tape.concat_cols(full_leaf, sample.action)?;
    let q1 = c1.forward(&mut tape, qin)?;
    let q2 = c2.forward(&mut tape, qin)?;
    let qmin = tape.min_pair(q1, q2)?;

    let alpha_t = nets.temperature.value();
    let ent = tape.scale(sample.log_prob, alpha_t)?;
    let adv = tape.sub(ent, qmin)?;
    let sac_loss = tape.mean(adv)?;

    // Smoothing: L2 distance between the deterministic squashed mean and
    // the measured joint positions carried in the batch states.
    let mu = mean_action_batch(&mut tape, mean, bound)?;
    let qmeas = tape.leaf_const(Tensor::matrix(m, d, arrays.joints.clone())?);
    let diff = tape.sub(mu, qmeas)?;
    let sq = tape.mul(diff, diff)?;
    let rs = tape.row_sum(sq)?;
    let norms = tape.sqrt(rs)?;
    let smooth = tape.mean(norms)?;

    let scaled_smooth = tape.scale(smooth, cfg.smoothing_coeff)?;
    let total = tape.add(sac_loss, scaled_smooth)?;

    let stats = ActorStats {
        loss: tape.scalar_value(total),
        smoothing_term: tape.scalar_value(smooth),
        mean_log_prob: {
            let lp = tape.value(sample.log_prob).data();
            lp.iter().sum::<f64>() / m as f64
        },
        mean_alpha: alpha_var.map(|a| {
            let vals = tape.value(a).data();
            let n = vals.len() / m;
            (0..n)
                .map(|k| (0..m).map(|r| vals[r * n + k]).sum::<f64>() / m as f64)
                .collect()
        }),
    };

    tape.backward(total)?;
    let grads = tp.grads(&tape);
    opts.actor.step(
        &mut nets.policy.params_mut(),
        &grads.iter().collect::<Vec<_>>(),
    )?;
    Ok(stats)
}

// ── temperature update ──────────────────────────────────────────────────

/// Gradient step on `E[-alpha (log pi + target_entropy)]` in log space.
/// Returns the loss value.
pub fn temperature_update(
    temperature: &mut Temperature,
    opt: &mut AdamState,
    mean_log_prob: f64,
    target_entropy: f64,
) -> Result<f64> {
    let k = mean_log_prob + target_entropy;
    let mut tape = Tape::new();
    let log_alpha = tape.leaf(Tensor::scalar(temperature.log_value())?);
    let alpha = tape.exp(log_alpha)?;
    let scaled = tape.scale(alpha, k)?;
    let loss = tape.neg(scaled)?;
    let value = tape.scalar_value(loss);
    tape.backward(loss)?;
    let grad = tape.grad_tensor(log_alpha);
    let mut t = Tensor::scalar(temperature.log_value())?;
    opt.step(&mut [&mut t], &[&grad])?;
    *temperature = Temperature::from_log(t.data()[0]);
    Ok(value)
}

// ── soft target update ──────────────────────────────────────────────────

/// `target <- (1 - tau) target + tau online`, elementwise.
pub fn soft_update(target: &mut ParamSet, online: &ParamSet, tau: f64) -> Result<()> {
    if !target.same_shape(online) {
        return Err(Error::shape("soft_update", "target/online shapes differ"));
    }
    for (t, o) in target.tensors_mut().into_iter().zip(online.tensors()) {
        for (tv, &ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = (1.0 - tau) * *tv + tau * ov;
        }
    }
    Ok(())
}
