//! Fixed MLP architectures, the Gaussian policy head, and tanh squashing
//! with joint-range scaling.
//!
//! Every network is a 2-hidden-layer MLP (ReLU, ReLU, linear output).
//! Experts and the fused network share one shape so their parameters can
//! be summed elementwise; the stochastic head splits the output layer into
//! a pre-squash mean and a clamped log standard deviation.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Fresh policy heads start at sigma = exp(-1): wide enough to explore,
/// narrow enough not to thrash a torque-limited plant.
pub const INIT_LOG_STD_BIAS: f64 = -1.0;
pub const EXPERT_HIDDEN_DEFAULT: usize = 256;
pub const GATING_HIDDEN_DEFAULT: usize = 128;
pub const CRITIC_HIDDEN_DEFAULT: usize = 256;

/// Architecture of one MLP: input, hidden (both layers), output widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
}

impl MlpSpec {
    pub fn new(input: usize, hidden: usize, output: usize) -> Result<Self> {
        if input == 0 || hidden == 0 || output == 0 {
            return Err(Error::contract("MlpSpec::new", "all dimensions must be >= 1"));
        }
        Ok(MlpSpec {
            input,
            hidden,
            output,
        })
    }

    pub fn expert(input: usize, action_dim: usize) -> Result<Self> {
        MlpSpec::new(input, EXPERT_HIDDEN_DEFAULT, 2 * action_dim)
    }

    pub fn gating(input: usize, num_experts: usize) -> Result<Self> {
        MlpSpec::new(input, GATING_HIDDEN_DEFAULT, num_experts)
    }

    pub fn critic(state_dim: usize, action_dim: usize) -> Result<Self> {
        MlpSpec::new(state_dim + action_dim, CRITIC_HIDDEN_DEFAULT, 1)
    }
}

/// The six tensors of one 2-hidden-layer MLP.
///
/// Biases are sized to the layer they are added to (b0 and b1 are
/// hidden-sized, b2 output-sized).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub w0: Tensor,
    pub b0: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl ParamSet {
    pub fn zeros(spec: MlpSpec) -> Self {
        ParamSet {
            w0: Tensor::zeros(vec![spec.input, spec.hidden]),
            b0: Tensor::zeros(vec![spec.hidden]),
            w1: Tensor::zeros(vec![spec.hidden, spec.hidden]),
            b1: Tensor::zeros(vec![spec.hidden]),
            w2: Tensor::zeros(vec![spec.hidden, spec.output]),
            b2: Tensor::zeros(vec![spec.output]),
        }
    }

    /// He-uniform initialisation: weights in +-sqrt(6 / fan_in), biases in
    /// +-1/sqrt(fan_in). Nonzero biases keep pre-activations off the exact
    /// ReLU kink even when a whole upstream row is dead.
    pub fn init_he_uniform(spec: MlpSpec, rng: &mut impl Rng) -> Self {
        let mut p = ParamSet::zeros(spec);
        for (w, b, fan_in) in [
            (&mut p.w0, &mut p.b0, spec.input),
            (&mut p.w1, &mut p.b1, spec.hidden),
            (&mut p.w2, &mut p.b2, spec.hidden),
        ] {
            let limit = (6.0 / fan_in as f64).sqrt();
            for v in w.data_mut() {
                *v = rng.gen_range(-limit..limit);
            }
            let blimit = 1.0 / (fan_in as f64).sqrt();
            for v in b.data_mut() {
                *v = rng.gen_range(-blimit..blimit);
            }
        }
        p
    }

    pub fn spec(&self) -> MlpSpec {
        MlpSpec {
            input: self.w0.shape()[0],
            hidden: self.w0.shape()[1],
            output: self.w2.shape()[1],
        }
    }

    pub fn same_shape(&self, other: &ParamSet) -> bool {
        self.tensors()
            .iter()
            .zip(other.tensors())
            .all(|(a, b)| a.same_shape(b))
    }

    pub fn tensors(&self) -> [&Tensor; 6] {
        [&self.w0, &self.b0, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [
            &mut self.w0,
            &mut self.b0,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }

    pub fn tensor_names() -> [&'static str; 6] {
        ["w0", "b0", "w1", "b1", "w2", "b2"]
    }
}

/// Bias the log-std half of a policy head toward [`INIT_LOG_STD_BIAS`].
pub fn init_policy_head(params: &mut ParamSet) {
    let y = params.spec().output;
    debug_assert_eq!(y % 2, 0, "policy heads have an even output");
    for v in &mut params.b2.data_mut()[y / 2..] {
        *v = INIT_LOG_STD_BIAS;
    }
}

/// ReLU -> ReLU -> linear forward pass on a single input vector.
pub fn mlp_forward(params: &ParamSet, input: &[f64]) -> Result<Vec<f64>> {
    let spec = params.spec();
    if input.len() != spec.input {
        return Err(Error::shape(
            "mlp_forward",
            format!("input of {} vs spec {}", input.len(), spec.input),
        ));
    }
    let mut h0 = params.b0.data().to_vec();
    accumulate_vec_mat(input, &params.w0, &mut h0);
    for v in &mut h0 {
        *v = v.max(0.0);
    }
    let mut h1 = params.b1.data().to_vec();
    accumulate_vec_mat(&h0, &params.w1, &mut h1);
    for v in &mut h1 {
        *v = v.max(0.0);
    }
    let mut out = params.b2.data().to_vec();
    accumulate_vec_mat(&h1, &params.w2, &mut out);
    Ok(out)
}

fn accumulate_vec_mat(x: &[f64], w: &Tensor, out: &mut [f64]) {
    let cols = w.shape()[1];
    let wd = w.data();
    for (i, &xv) in x.iter().enumerate() {
        if xv == 0.0 {
            continue;
        }
        let row = &wd[i * cols..(i + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xv * wv;
        }
    }
}

/// Pre-squash mean and clamped log standard deviation of the Gaussian head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean_pre_squash: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// First half of the raw head output is the mean, second half the log-std
/// clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
pub fn split_head(raw: &[f64]) -> Result<PolicyOutput> {
    if raw.len() % 2 != 0 {
        return Err(Error::contract(
            "split_head",
            format!("raw head output must have even length, got {}", raw.len()),
        ));
    }
    let d = raw.len() / 2;
    Ok(PolicyOutput {
        mean_pre_squash: raw[..d].to_vec(),
        log_std: raw[d..].iter().map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX)).collect(),
    })
}

/// Per-joint action interval. The squashed unit action is affinely mapped
/// onto `[lo, hi]`; for ranges symmetric about zero this is the half-range
/// scaling a = q_bar * tanh(u).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBound {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl ActionBound {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::shape("ActionBound::new", "lo/hi length mismatch"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l >= h) {
            return Err(Error::contract("ActionBound::new", "need lo < hi per joint"));
        }
        Ok(ActionBound { lo, hi })
    }

    /// Symmetric bound of half-range `q_bar` per joint.
    pub fn symmetric(half_range: Vec<f64>) -> Result<Self> {
        if half_range.iter().any(|&q| q <= 0.0) {
            return Err(Error::contract("ActionBound::symmetric", "half-range must be > 0"));
        }
        let lo = half_range.iter().map(|q| -q).collect();
        ActionBound::new(lo, half_range)
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn half(&self, j: usize) -> f64 {
        0.5 * (self.hi[j] - self.lo[j])
    }

    pub fn mid(&self, j: usize) -> f64 {
        0.5 * (self.hi[j] + self.lo[j])
    }

    pub fn halves(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.half(j)).collect()
    }

    pub fn mids(&self) -> Vec<f64> {
        (0..self.dim()).map(|j| self.mid(j)).collect()
    }

    pub fn squash(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .enumerate()
            .map(|(j, &v)| self.mid(j) + self.half(j) * v.tanh())
            .collect()
    }
}

/// log(1 - tanh(u)^2) computed without cancellation.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - crate::autodiff::tape::softplus(-2.0 * u))
}

/// Draw u ~ N(mean, exp(log_std)^2), squash through tanh, and scale to the
/// joint range. Returns the action and its log-probability under the
/// squashed distribution (Gaussian log-density minus the tanh correction).
pub fn sample_squashed(
    out: &PolicyOutput,
    bound: &ActionBound,
    rng: &mut impl Rng,
) -> (Vec<f64>, f64) {
    let eps: Vec<f64> = (0..out.mean_pre_squash.len())
        .map(|_| standard_normal(rng))
        .collect();
    squash_with_noise(out, bound, &eps)
}

/// Deterministic variant of [`sample_squashed`] given the standard-normal
/// draws, used by the training path so noise can be fixed on the tape.
pub fn squash_with_noise(out: &PolicyOutput, bound: &ActionBound, eps: &[f64]) -> (Vec<f64>, f64) {
    let mut log_prob = 0.0;
    let mut action = Vec::with_capacity(out.mean_pre_squash.len());
    for j in 0..out.mean_pre_squash.len() {
        let std = out.log_std[j].exp();
        let u = out.mean_pre_squash[j] + std * eps[j];
        log_prob += -0.5 * eps[j] * eps[j] - out.log_std[j] - 0.5 * (2.0 * PI).ln();
        log_prob -= log_one_minus_tanh_sq(u);
        action.push(bound.mid(j) + bound.half(j) * u.tanh());
    }
    (action, log_prob)
}

/// Deterministic evaluation action: the squashed-and-scaled mean.
pub fn mean_action(out: &PolicyOutput, bound: &ActionBound) -> Vec<f64> {
    bound.squash(&out.mean_pre_squash)
}

/// Box-Muller standard normal, two uniforms per draw for a stable stream.
pub fn standard_normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}
