use mela::autodiff::{Tape, Tensor};
use mela::batched::*;
use mela::fusion::init_stage2;
use mela::nets::{ActionBound, MlpSpec, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

#[derive(Clone, Copy, PartialEq)]
enum Variant { RawMean, LogProb, Action, MinQ, Full }

fn main() {
    let instance = 4u64;
    let mut rng = ChaCha12Rng::seed_from_u64(1000 + instance);
    let m = 3; let (pd, gd, ad) = (6usize, 4usize, 2usize);
    let bank = {
        let mut r2 = ChaCha12Rng::seed_from_u64(2000 + instance);
        let espec = MlpSpec::new(pd, 8, 4).unwrap();
        let a = ParamSet::init_he_uniform(espec, &mut r2);
        let b = ParamSet::init_he_uniform(espec, &mut r2);
        init_stage2(&a, &b, 4, MlpSpec::new(gd, 6, 4).unwrap(), &mut r2).unwrap()
    };
    let critic_spec = MlpSpec::new(pd + ad, 8, 1).unwrap();
    let critic1 = ParamSet::init_he_uniform(critic_spec, &mut rng);
    let critic2 = ParamSet::init_he_uniform(critic_spec, &mut rng);
    let bound = ActionBound::symmetric(vec![PI, PI]).unwrap();
    let px: Vec<f64> = (0..m * pd).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let gx: Vec<f64> = (0..m * gd).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let _qmeas: Vec<f64> = (0..m * ad).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eps: Vec<f64> = (0..m * ad).map(|_| rng.gen_range(-1.0..1.0)).collect();

    for variant in [Variant::RawMean, Variant::LogProb, Variant::Action, Variant::MinQ, Variant::Full] {
        let f = |experts: &[ParamSet], gating: &ParamSet, want: bool| -> (f64, Tensor) {
            let mut tape = Tape::new();
            let te: Vec<TapedMlp> = experts.iter().map(|e| TapedMlp::register(&mut tape, e)).collect();
            let tg = TapedMlp::register(&mut tape, gating);
            let c1 = TapedMlp::register_const(&mut tape, &critic1);
            let c2 = TapedMlp::register_const(&mut tape, &critic2);
            let pxv = tape.leaf_const(Tensor::matrix(m, pd, px.clone()).unwrap());
            let gxv = tape.leaf_const(Tensor::matrix(m, gd, gx.clone()).unwrap());
            let alpha = gating_alpha(&mut tape, &tg, gxv).unwrap();
            let raw = fused_policy_forward(&mut tape, &te, alpha, pxv).unwrap();
            let loss = match variant {
                Variant::RawMean => tape.mean(raw).unwrap(),
                _ => {
                    let (mean, log_std) = split_head_batch(&mut tape, raw).unwrap();
                    let e = Tensor::matrix(m, ad, eps.clone()).unwrap();
                    let s = squash_and_logprob(&mut tape, mean, log_std, &e, &bound).unwrap();
                    match variant {
                        Variant::LogProb => tape.mean(s.log_prob).unwrap(),
                        Variant::Action => tape.mean(s.action).unwrap(),
                        _ => {
                            let qin = tape.concat_cols(pxv, s.action).unwrap();
                            let q1 = c1.forward(&mut tape, qin).unwrap();
                            let q2 = c2.forward(&mut tape, qin).unwrap();
                            let qmin = tape.min_pair(q1, q2).unwrap();
                            match variant {
                                Variant::MinQ => tape.mean(qmin).unwrap(),
                                _ => {
                                    let ent = tape.scale(s.log_prob, 0.2).unwrap();
                                    let adv = tape.sub(ent, qmin).unwrap();
                                    tape.mean(adv).unwrap()
                                }
                            }
                        }
                    }
                }
            };
            let v = tape.scalar_value(loss);
            if !want { return (v, Tensor::zeros(vec![1])); }
            tape.backward(loss).unwrap();
            (v, tape.grad_tensor(tg.b1))
        };
        let (_, an_b1) = f(&bank.experts, &bank.gating, true);
        // FD on gating.b1 only
        let mut g = bank.gating.clone();
        let mut fd_b1 = vec![0.0; g.b1.numel()];
        for i in 0..g.b1.numel() {
            let orig = g.b1.data()[i];
            g.b1.data_mut()[i] = orig + 1e-6;
            let up = f(&bank.experts, &g, false).0;
            g.b1.data_mut()[i] = orig - 1e-6;
            let dn = f(&bank.experts, &g, false).0;
            g.b1.data_mut()[i] = orig;
            fd_b1[i] = (up - dn) / 2e-6;
        }
        let name = match variant { Variant::RawMean=>"raw_mean", Variant::LogProb=>"log_prob", Variant::Action=>"action", Variant::MinQ=>"min_q", Variant::Full=>"full_sac" };
        let worst: f64 = fd_b1.iter().zip(an_b1.data()).map(|(f, a)| {
            let d = (f - a).abs();
            if d > 1e-7 { d / f.abs().max(a.abs()).max(1e-12) } else { 0.0 }
        }).fold(0.0, f64::max);
        println!("{name:9}: worst rel {worst:.4}   fd={:?}   an={:?}", &fd_b1[..3], &an_b1.data()[..3]);
    }
}
