use mela::autodiff::{Tape, Tensor};
use mela::batched::*;
use mela::fusion::init_stage2;
use mela::nets::{MlpSpec, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn main() {
    let instance = 4u64;
    let mut rng = ChaCha12Rng::seed_from_u64(1000 + instance);
    let m = 3; let (pd, gd) = (6usize, 4usize);
    let bank = {
        let mut r2 = ChaCha12Rng::seed_from_u64(2000 + instance);
        let espec = MlpSpec::new(pd, 8, 4).unwrap();
        let a = ParamSet::init_he_uniform(espec, &mut r2);
        let b = ParamSet::init_he_uniform(espec, &mut r2);
        init_stage2(&a, &b, 4, MlpSpec::new(gd, 6, 4).unwrap(), &mut r2).unwrap()
    };
    // Consume the critic draws so px/gx match the failing instance exactly.
    let critic_spec = MlpSpec::new(pd + 2, 8, 1).unwrap();
    let _critic1 = ParamSet::init_he_uniform(critic_spec, &mut rng);
    let _critic2 = ParamSet::init_he_uniform(critic_spec, &mut rng);
    let px: Vec<f64> = (0..m * pd).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let gx: Vec<f64> = (0..m * gd).map(|_| rng.gen_range(-1.5..1.5)).collect();

    let loss_of = |gating: &ParamSet| -> f64 {
        let mut tape = Tape::new();
        let te: Vec<TapedMlp> = bank.experts.iter().map(|e| TapedMlp::register(&mut tape, e)).collect();
        let tg = TapedMlp::register(&mut tape, gating);
        let pxv = tape.leaf_const(Tensor::matrix(m, pd, px.clone()).unwrap());
        let gxv = tape.leaf_const(Tensor::matrix(m, gd, gx.clone()).unwrap());
        let alpha = gating_alpha(&mut tape, &tg, gxv).unwrap();
        let raw = fused_policy_forward(&mut tape, &te, alpha, pxv).unwrap();
        let loss = tape.mean(raw).unwrap();
        tape.scalar_value(loss)
    };

    let base = loss_of(&bank.gating);
    for delta in [1e-6, 1e-3, 0.05] {
        let mut g = bank.gating.clone();
        g.b1.data_mut()[0] += delta;
        let up = loss_of(&g);
        g.b1.data_mut()[0] -= 2.0 * delta;
        let dn = loss_of(&g);
        println!("delta {delta:.0e}: up-base {:+.3e}, dn-base {:+.3e}, secant {:+.3e}", up - base, dn - base, (up - dn) / (2.0 * delta));
    }
    // also check: does b0 (first hidden bias) respond identically? (suspect index aliasing)
    let mut g = bank.gating.clone();
    g.b0.data_mut()[0] += 1e-3;
    println!("b0[0]+1e-3 changes loss by {:+.3e}", loss_of(&g) - base);
    println!("gating spec: {:?}", bank.gating.spec());
    println!("b0 len {}, b1 len {}", bank.gating.b0.numel(), bank.gating.b1.numel());
}
