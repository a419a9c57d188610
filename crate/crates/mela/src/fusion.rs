//! Parameter-space fusion of experts: a gating network produces simplex
//! weights, the expert parameter sets are blended elementwise into one
//! synthesized network, and the result is evaluated like any other MLP.
//!
//! The output-blending mixture baseline lives here too, sharing the same
//! bank layout so both can be trained and compared under one protocol.

use crate::autodiff::softmax_stable;
use crate::error::{Error, Result};
use crate::nets::{mlp_forward, split_head, MlpSpec, ParamSet, PolicyOutput};
use rand::Rng;

/// Simplex weights over the experts.
#[derive(Debug, Clone, PartialEq)]
pub struct GatingWeights(Vec<f64>);

impl GatingWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        let sum: f64 = alpha.iter().sum();
        if alpha.iter().any(|&a| !(0.0..=1.0).contains(&a)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::contract(
                "GatingWeights::new",
                format!("weights must lie on the simplex, sum = {sum}"),
            ));
        }
        Ok(GatingWeights(alpha))
    }

    pub fn one_hot(n: usize, k: usize) -> Result<Self> {
        if k >= n {
            return Err(Error::contract("GatingWeights::one_hot", "index out of range"));
        }
        let mut alpha = vec![0.0; n];
        alpha[k] = 1.0;
        Ok(GatingWeights(alpha))
    }

    pub fn uniform(n: usize) -> Self {
        GatingWeights(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Ordered collection of shape-identical experts plus the gating network.
#[derive(Debug, Clone)]
pub struct ExpertBank {
    pub experts: Vec<ParamSet>,
    pub gating: ParamSet,
}

impl ExpertBank {
    pub fn new(experts: Vec<ParamSet>, gating: ParamSet) -> Result<Self> {
        if experts.len() < 2 {
            return Err(Error::contract("ExpertBank::new", "need at least 2 experts"));
        }
        if !experts.windows(2).all(|w| w[0].same_shape(&w[1])) {
            return Err(Error::shape("ExpertBank::new", "expert shapes differ"));
        }
        if gating.spec().output != experts.len() {
            return Err(Error::shape(
                "ExpertBank::new",
                format!(
                    "gating emits {} logits for {} experts",
                    gating.spec().output,
                    experts.len()
                ),
            ));
        }
        Ok(ExpertBank { experts, gating })
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn expert_spec(&self) -> MlpSpec {
        self.experts[0].spec()
    }
}

/// Run the gating MLP and softmax its logits into simplex weights.
pub fn gating_forward(gating: &ParamSet, gating_state: &[f64]) -> Result<GatingWeights> {
    let logits = mlp_forward(gating, gating_state)?;
    GatingWeights::new(softmax_stable(&logits))
}

/// Elementwise convex combination of the expert parameter sets:
/// every fused tensor is `sum_n alpha_n * expert_n`.
pub fn fuse_parameters(bank: &ExpertBank, alpha: &GatingWeights) -> Result<ParamSet> {
    if alpha.len() != bank.num_experts() {
        return Err(Error::contract(
            "fuse_parameters",
            format!("{} weights for {} experts", alpha.len(), bank.num_experts()),
        ));
    }
    let mut fused = ParamSet::zeros(bank.expert_spec());
    for (expert, &a) in bank.experts.iter().zip(alpha.as_slice()) {
        for (dst, src) in fused.tensors_mut().into_iter().zip(expert.tensors()) {
            for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
                *d += a * s;
            }
        }
    }
    Ok(fused)
}

/// Full synthesized step: gate, fuse, run the fused MLP, split the head.
/// Recomputed fresh for every policy step.
pub fn synthesized_forward(
    bank: &ExpertBank,
    gating_state: &[f64],
    policy_state: &[f64],
) -> Result<(PolicyOutput, GatingWeights)> {
    let alpha = gating_forward(&bank.gating, gating_state)?;
    let fused = fuse_parameters(bank, &alpha)?;
    let raw = mlp_forward(&fused, policy_state)?;
    Ok((split_head(&raw)?, alpha))
}

/// Mixture-of-experts baseline: every expert is evaluated on the policy
/// state and the raw head outputs are blended by alpha before squashing.
pub fn moe_forward(
    bank: &ExpertBank,
    gating_state: &[f64],
    policy_state: &[f64],
) -> Result<(PolicyOutput, GatingWeights)> {
    let alpha = gating_forward(&bank.gating, gating_state)?;
    let y = bank.expert_spec().output;
    let mut blended = vec![0.0; y];
    for (expert, &a) in bank.experts.iter().zip(alpha.as_slice()) {
        let raw = mlp_forward(expert, policy_state)?;
        for (b, r) in blended.iter_mut().zip(raw) {
            *b += a * r;
        }
    }
    Ok((split_head(&blended)?, alpha))
}

/// Stage-2 initialisation: experts `1..N/2` copy the first pretrained
/// parameter set, the rest copy the second; the gating network is drawn
/// fresh so initial weights start near uniform.
pub fn init_stage2(
    pretrained_a: &ParamSet,
    pretrained_b: &ParamSet,
    num_experts: usize,
    gating_spec: MlpSpec,
    rng: &mut impl Rng,
) -> Result<ExpertBank> {
    if num_experts < 2 || num_experts % 2 != 0 {
        return Err(Error::contract(
            "init_stage2",
            format!("expert count must be even and >= 2, got {num_experts}"),
        ));
    }
    if !pretrained_a.same_shape(pretrained_b) {
        return Err(Error::shape("init_stage2", "pretrained shapes differ"));
    }
    if gating_spec.output != num_experts {
        return Err(Error::shape(
            "init_stage2",
            format!("gating output {} != {num_experts}", gating_spec.output),
        ));
    }
    let mut experts = Vec::with_capacity(num_experts);
    for _ in 0..num_experts / 2 {
        experts.push(pretrained_a.clone());
    }
    for _ in 0..num_experts / 2 {
        experts.push(pretrained_b.clone());
    }
    let gating = ParamSet::init_he_uniform(gating_spec, rng);
    ExpertBank::new(experts, gating)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn bank(n: usize, seed: u64) -> ExpertBank {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let spec = MlpSpec::new(4, 6, 4).unwrap();
        let experts = (0..n)
            .map(|_| ParamSet::init_he_uniform(spec, &mut rng))
            .collect();
        let gating = ParamSet::init_he_uniform(MlpSpec::new(3, 5, n).unwrap(), &mut rng);
        ExpertBank::new(experts, gating).unwrap()
    }

    #[test]
    fn zero_gating_params_give_uniform_weights() {
        let n = 8;
        let gating = ParamSet::zeros(MlpSpec::new(3, 5, n).unwrap());
        let alpha = gating_forward(&gating, &[0.4, -0.2, 1.0]).unwrap();
        for &a in alpha.as_slice() {
            assert!((a - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_logit_is_near_one_hot() {
        // Direct softmax evaluation: e^10 / (e^10 + (n-1)).
        let top = |n: usize| {
            let mut logits = vec![0.0; n];
            logits[0] = 10.0;
            softmax_stable(&logits)[0]
        };
        assert!((top(2) - 0.9999546021312976).abs() < 1e-12);
        assert!((top(8) - 0.9996823014561037).abs() < 1e-12);
        assert!(top(8) > 0.999);
    }

    #[test]
    fn gating_weights_always_sum_to_one() {
        let b = bank(8, 7);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for _ in 0..200 {
            let state: Vec<f64> = (0..3).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let alpha = gating_forward(&b.gating, &state).unwrap();
            let sum: f64 = alpha.as_slice().iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_hot_fusion_recovers_the_expert() {
        let b = bank(4, 3);
        for k in 0..4 {
            let alpha = GatingWeights::one_hot(4, k).unwrap();
            let fused = fuse_parameters(&b, &alpha).unwrap();
            for (f, e) in fused.tensors().iter().zip(b.experts[k].tensors()) {
                for (fv, ev) in f.data().iter().zip(e.data()) {
                    assert!((fv - ev).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn scalar_two_expert_blend() {
        // "weights" 1 and 3 with alpha (0.25, 0.75) fuse to 2.5
        let spec = MlpSpec::new(1, 1, 1).unwrap();
        let mut a = ParamSet::zeros(spec);
        let mut c = ParamSet::zeros(spec);
        a.w0.data_mut()[0] = 1.0;
        c.w0.data_mut()[0] = 3.0;
        let gating = ParamSet::zeros(MlpSpec::new(1, 1, 2).unwrap());
        let b = ExpertBank::new(vec![a, c], gating).unwrap();
        let alpha = GatingWeights::new(vec![0.25, 0.75]).unwrap();
        let fused = fuse_parameters(&b, &alpha).unwrap();
        assert!((fused.w0.data()[0] - 2.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_fusion_equals_direct_average_oracle() {
        let b = bank(6, 5);
        let alpha = GatingWeights::uniform(6);
        let fused = fuse_parameters(&b, &alpha).unwrap();
        for (ti, f) in fused.tensors().iter().enumerate() {
            for (i, fv) in f.data().iter().enumerate() {
                let mean: f64 = b
                    .experts
                    .iter()
                    .map(|e| e.tensors()[ti].data()[i])
                    .sum::<f64>()
                    / 6.0;
                assert!((fv - mean).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn synthesized_one_hot_matches_expert_forward() {
        let mut b = bank(8, 9);
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        for k in 0..8 {
            // Force the gate one-hot by zeroing the gating net and biasing
            // logit k far above the rest.
            b.gating = ParamSet::zeros(b.gating.spec());
            b.gating.b2.data_mut()[k] = 500.0;
            let gs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ps: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let (out, alpha) = synthesized_forward(&b, &gs, &ps).unwrap();
            assert!(alpha.as_slice()[k] > 1.0 - 1e-12);
            let direct = split_head(&mlp_forward(&b.experts[k], &ps).unwrap()).unwrap();
            for (a, c) in out.mean_pre_squash.iter().zip(&direct.mean_pre_squash) {
                assert!((a - c).abs() < 1e-12);
            }
            for (a, c) in out.log_std.iter().zip(&direct.log_std) {
                assert!((a - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_permutation_leaves_output_unchanged() {
        let b = bank(4, 13);
        let gs = [0.2, -0.7, 0.4];
        let ps = [1.0, -0.5, 0.25, 0.8];
        let alpha = gating_forward(&b.gating, &gs).unwrap();
        let fused = fuse_parameters(&b, &alpha).unwrap();

        // Rotate experts and the gating output channels together.
        let perm = [2usize, 0, 3, 1];
        let experts: Vec<ParamSet> = perm.iter().map(|&i| b.experts[i].clone()).collect();
        let mut gating = b.gating.clone();
        let y = gating.spec().output;
        let h = gating.spec().hidden;
        let (old_w2, old_b2) = (gating.w2.clone(), gating.b2.clone());
        for (new_col, &src_col) in perm.iter().enumerate() {
            for r in 0..h {
                gating.w2.data_mut()[r * y + new_col] = old_w2.data()[r * y + src_col];
            }
            gating.b2.data_mut()[new_col] = old_b2.data()[src_col];
        }
        let pb = ExpertBank::new(experts, gating).unwrap();
        let alpha_p = gating_forward(&pb.gating, &gs).unwrap();
        let fused_p = fuse_parameters(&pb, &alpha_p).unwrap();
        for (f, g) in fused.tensors().iter().zip(fused_p.tensors()) {
            for (a, c) in f.data().iter().zip(g.data()) {
                assert!((a - c).abs() < 1e-12);
            }
        }
        let _ = mlp_forward(&fused_p, &ps).unwrap();
    }

    #[test]
    fn moe_one_hot_matches_expert() {
        let mut b = bank(4, 17);
        b.gating = ParamSet::zeros(b.gating.spec());
        b.gating.b2.data_mut()[2] = 500.0;
        let ps = [0.1, 0.2, -0.3, 0.4];
        let (out, _) = moe_forward(&b, &[0.0, 0.0, 0.0], &ps).unwrap();
        let direct = split_head(&mlp_forward(&b.experts[2], &ps).unwrap()).unwrap();
        for (a, c) in out.mean_pre_squash.iter().zip(&direct.mean_pre_squash) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn moe_blends_constant_outputs() {
        let spec = MlpSpec::new(1, 1, 2).unwrap();
        let mut a = ParamSet::zeros(spec);
        let mut c = ParamSet::zeros(spec);
        a.b2 = Tensor::vector(vec![0.0, 0.0]).unwrap();
        c.b2 = Tensor::vector(vec![1.0, 1.0]).unwrap();
        let gating = ParamSet::zeros(MlpSpec::new(1, 1, 2).unwrap());
        let b = ExpertBank::new(vec![a, c], gating).unwrap();
        let (out, alpha) = moe_forward(&b, &[0.0], &[0.0]).unwrap();
        assert_eq!(alpha.as_slice(), &[0.5, 0.5]);
        assert!((out.mean_pre_squash[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn output_blending_differs_from_parameter_blending() {
        // Random search for an instance separating the two synthesis rules;
        // existence confirms parameter fusion is not output blending.
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let spec = MlpSpec::new(2, 4, 2).unwrap();
        let gspec = MlpSpec::new(2, 3, 2).unwrap();
        let mut best: f64 = 0.0;
        for _ in 0..200 {
            let experts = vec![
                ParamSet::init_he_uniform(spec, &mut rng),
                ParamSet::init_he_uniform(spec, &mut rng),
            ];
            let gating = ParamSet::init_he_uniform(gspec, &mut rng);
            let b = ExpertBank::new(experts, gating).unwrap();
            let gs = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let ps = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let (syn, alpha) = synthesized_forward(&b, &gs, &ps).unwrap();
            // Skip near-vertex gates where the two rules coincide.
            if alpha.as_slice().iter().any(|&a| a > 0.95) {
                continue;
            }
            let (moe, _) = moe_forward(&b, &gs, &ps).unwrap();
            for (s, m) in syn.mean_pre_squash.iter().zip(&moe.mean_pre_squash) {
                best = best.max((s - m).abs());
            }
        }
        assert!(best > 1e-3, "max separation {best}");
    }

    #[test]
    fn stage2_init_copies_groups_and_randomises_gating() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let spec = MlpSpec::new(4, 6, 4).unwrap();
        let a = ParamSet::init_he_uniform(spec, &mut rng);
        let b = ParamSet::init_he_uniform(spec, &mut rng);
        let gspec = MlpSpec::new(3, 5, 8).unwrap();

        let bank = init_stage2(&a, &b, 8, gspec, &mut rng).unwrap();
        for k in 0..4 {
            assert_eq!(bank.experts[k], a);
        }
        for k in 4..8 {
            assert_eq!(bank.experts[k], b);
        }

        // Degenerate split: one copy each.
        let gspec2 = MlpSpec::new(3, 5, 2).unwrap();
        let bank2 = init_stage2(&a, &b, 2, gspec2, &mut rng).unwrap();
        assert_eq!(bank2.experts[0], a);
        assert_eq!(bank2.experts[1], b);

        // Different seeds keep experts identical and vary only the gating.
        let mut r1 = ChaCha12Rng::seed_from_u64(100);
        let mut r2 = ChaCha12Rng::seed_from_u64(200);
        let bank_s1 = init_stage2(&a, &b, 8, gspec, &mut r1).unwrap();
        let bank_s2 = init_stage2(&a, &b, 8, gspec, &mut r2).unwrap();
        assert_eq!(bank_s1.experts, bank_s2.experts);
        assert_ne!(bank_s1.gating, bank_s2.gating);

        assert!(init_stage2(&a, &b, 3, gspec, &mut rng).is_err());
        assert!(init_stage2(&a, &b, 0, gspec, &mut rng).is_err());
    }

    #[test]
    fn identical_experts_make_fusion_alpha_independent() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let spec = MlpSpec::new(4, 6, 4).unwrap();
        let e = ParamSet::init_he_uniform(spec, &mut rng);
        let bank = init_stage2(&e, &e, 2, MlpSpec::new(3, 5, 2).unwrap(), &mut rng).unwrap();
        let ps = [0.3, -0.9, 0.5, 0.2];
        let (a1, _) = synthesized_forward(&bank, &[1.0, 0.0, 0.0], &ps).unwrap();
        let (a2, _) = synthesized_forward(&bank, &[-2.0, 5.0, 1.0], &ps).unwrap();
        for (x, y) in a1.mean_pre_squash.iter().zip(&a2.mean_pre_squash) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    proptest! {
        /// fuse(lambda * a + (1 - lambda) * b) = lambda * fuse(a) + (1 - lambda) * fuse(b)
        #[test]
        fn fusion_linear_in_the_weights(
            raw_a in proptest::collection::vec(0.01f64..1.0, 4),
            raw_b in proptest::collection::vec(0.01f64..1.0, 4),
            lambda in 0.0f64..1.0,
        ) {
            let norm = |v: &[f64]| {
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect::<Vec<_>>()
            };
            let a = norm(&raw_a);
            let b = norm(&raw_b);
            let bank = bank(4, 42);
            let fa = fuse_parameters(&bank, &GatingWeights::new(a.clone()).unwrap()).unwrap();
            let fb = fuse_parameters(&bank, &GatingWeights::new(b.clone()).unwrap()).unwrap();
            let mixed: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
            let fm = fuse_parameters(&bank, &GatingWeights::new(mixed).unwrap()).unwrap();
            for ((m, x), y) in fm.tensors().iter().zip(fa.tensors()).zip(fb.tensors()) {
                for ((mv, xv), yv) in m.data().iter().zip(x.data()).zip(y.data()) {
                    prop_assert!((mv - (lambda * xv + (1.0 - lambda) * yv)).abs() < 1e-12);
                }
            }
        }
    }
}
