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
    let px: Vec<f64> = (0..m * pd).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let gx: Vec<f64> = (0..m * gd).map(|_| rng.gen_range(-1.5..1.5)).collect();

    // manual gating forward on the tape with intermediate handles
    let mut tape = Tape::new();
    let te: Vec<TapedMlp> = bank.experts.iter().map(|e| TapedMlp::register(&mut tape, e)).collect();
    let tg = TapedMlp::register(&mut tape, &bank.gating);
    let pxv = tape.leaf_const(Tensor::matrix(m, pd, px.clone()).unwrap());
    let gxv = tape.leaf_const(Tensor::matrix(m, gd, gx.clone()).unwrap());
    let z0 = tape.matmul(gxv, tg.w0).unwrap();
    let z0b = tape.add_row(z0, tg.b0).unwrap();
    let h0 = tape.relu(z0b).unwrap();
    let z1 = tape.matmul(h0, tg.w1).unwrap();
    let z1b = tape.add_row(z1, tg.b1).unwrap();
    let h1 = tape.relu(z1b).unwrap();
    let z2 = tape.matmul(h1, tg.w2).unwrap();
    let logits = tape.add_row(z2, tg.b2).unwrap();
    let alpha = tape.row_softmax(logits).unwrap();
    let raw = fused_policy_forward(&mut tape, &te, alpha, pxv).unwrap();
    let loss = tape.mean(raw).unwrap();
    tape.backward(loss).unwrap();

    println!("z1b vals: {:?}", tape.value(z1b).data());
    println!("h1 grad:  {:?}", tape.grad(h1));
    println!("z1b grad: {:?}", tape.grad(z1b));
    println!("b1 grad:  {:?}", tape.grad(tg.b1));
    println!("alpha vals: {:?}", tape.value(alpha).data());
    println!("alpha grad: {:?}", tape.grad(alpha));
}
