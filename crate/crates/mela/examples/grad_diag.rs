use mela::autodiff::{Tape, Tensor};
use mela::batched::*;
use mela::fusion::init_stage2;
use mela::nets::{ActionBound, MlpSpec, ParamSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;

fn main() {
    for instance in 0..20u64 {
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
        let qmeas: Vec<f64> = (0..m * ad).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let eps: Vec<f64> = (0..m * ad).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let f = |experts: &[ParamSet], gating: &ParamSet, want: bool| -> (f64, Vec<Tensor>) {
            let mut tape = Tape::new();
            let te: Vec<TapedMlp> = experts.iter().map(|e| TapedMlp::register(&mut tape, e)).collect();
            let tg = TapedMlp::register(&mut tape, gating);
            let c1 = TapedMlp::register_const(&mut tape, &critic1);
            let c2 = TapedMlp::register_const(&mut tape, &critic2);
            let pxv = tape.leaf_const(Tensor::matrix(m, pd, px.clone()).unwrap());
            let gxv = tape.leaf_const(Tensor::matrix(m, gd, gx.clone()).unwrap());
            let alpha = gating_alpha(&mut tape, &tg, gxv).unwrap();
            let raw = fused_policy_forward(&mut tape, &te, alpha, pxv).unwrap();
            let (mean, log_std) = split_head_batch(&mut tape, raw).unwrap();
            let e = Tensor::matrix(m, ad, eps.clone()).unwrap();
            let s = squash_and_logprob(&mut tape, mean, log_std, &e, &bound).unwrap();
            let qin = tape.concat_cols(pxv, s.action).unwrap();
            let q1 = c1.forward(&mut tape, qin).unwrap();
            let q2 = c2.forward(&mut tape, qin).unwrap();
            let qmin = tape.min_pair(q1, q2).unwrap();
            let ent = tape.scale(s.log_prob, 0.2).unwrap();
            let adv = tape.sub(ent, qmin).unwrap();
            let sac = tape.mean(adv).unwrap();
            let mu = mean_action_batch(&mut tape, mean, &bound).unwrap();
            let qm = tape.leaf_const(Tensor::matrix(m, ad, qmeas.clone()).unwrap());
            let diff = tape.sub(mu, qm).unwrap();
            let sq = tape.mul(diff, diff).unwrap();
            let rs = tape.row_sum(sq).unwrap();
            let norms = tape.sqrt(rs).unwrap();
            let smooth = tape.mean(norms).unwrap();
            let scaled = tape.scale(smooth, 2.0).unwrap();
            let total = tape.add(sac, scaled).unwrap();
            let v = tape.scalar_value(total);
            if !want { return (v, vec![]); }
            tape.backward(total).unwrap();
            let mut g = Vec::new();
            for t in &te { g.extend(t.grads(&tape)); }
            g.extend(tg.grads(&tape));
            (v, g)
        };
        let (_, analytic) = f(&bank.experts, &bank.gating, true);
        let mut params: Vec<Tensor> = Vec::new();
        for e in &bank.experts { params.extend(e.tensors().iter().map(|t| (*t).clone())); }
        params.extend(bank.gating.tensors().iter().map(|t| (*t).clone()));

        let names = ["w0","b0","w1","b1","w2","b2"];
        let mut worst = (0.0f64, 0usize, 0usize, 0.0, 0.0);
        let mut work = params.clone();
        for ti in 0..params.len() {
            for i in 0..params[ti].numel() {
                let orig = params[ti].data()[i];
                work[ti].data_mut()[i] = orig + 1e-5;
                let up = { let mut sets = Vec::new(); for c in work.chunks(6) { sets.push(ParamSet{w0:c[0].clone(),b0:c[1].clone(),w1:c[2].clone(),b1:c[3].clone(),w2:c[4].clone(),b2:c[5].clone()}); } let g = sets.pop().unwrap(); f(&sets, &g, false).0 };
                work[ti].data_mut()[i] = orig - 1e-5;
                let dn = { let mut sets = Vec::new(); for c in work.chunks(6) { sets.push(ParamSet{w0:c[0].clone(),b0:c[1].clone(),w1:c[2].clone(),b1:c[3].clone(),w2:c[4].clone(),b2:c[5].clone()}); } let g = sets.pop().unwrap(); f(&sets, &g, false).0 };
                work[ti].data_mut()[i] = orig;
                let fd = (up - dn) / 2e-5;
                let an = analytic[ti].data()[i];
                let denom = fd.abs().max(an.abs());
                let d = (fd - an).abs();
                if d > 1e-7 && denom > 0.0 && d / denom > 1e-4 {
                    // re-estimate at h/16
                    work[ti].data_mut()[i] = orig + 1e-5 / 16.0;
                    let up2 = { let mut sets = Vec::new(); for c in work.chunks(6) { sets.push(ParamSet{w0:c[0].clone(),b0:c[1].clone(),w1:c[2].clone(),b1:c[3].clone(),w2:c[4].clone(),b2:c[5].clone()}); } let g = sets.pop().unwrap(); f(&sets, &g, false).0 };
                    work[ti].data_mut()[i] = orig - 1e-5 / 16.0;
                    let dn2 = { let mut sets = Vec::new(); for c in work.chunks(6) { sets.push(ParamSet{w0:c[0].clone(),b0:c[1].clone(),w1:c[2].clone(),b1:c[3].clone(),w2:c[4].clone(),b2:c[5].clone()}); } let g = sets.pop().unwrap(); f(&sets, &g, false).0 };
                    work[ti].data_mut()[i] = orig;
                    let fd2 = (up2 - dn2) / (2e-5 / 16.0);
                    let names2 = ["w0","b0","w1","b1","w2","b2"];
                    let group = if ti < 24 { format!("expert{}[{}]", ti / 6, names2[ti % 6]) } else { format!("gating[{}]", names2[ti % 6]) };
                    println!("instance {instance}: rel {:.4} at {} idx {} fd={:.6e} fd16={:.6e} an={:.6e}", d/denom, group, i, fd, fd2, an);
                    if d / denom > worst.0 { worst = (d / denom, ti, i, fd, an); }
                }
            }
        }
        let _ = (&names, &worst);
    }
    println!("done");
}
