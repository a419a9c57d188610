// Hand-driven sanity: command constant references, watch where the plant settles.
use mela::env::*;
use mela::pipeline::{impedance_torque, interpolate_and_limit, ImpedanceGains, LowPassFilter, RateLimiter};

fn drive(target: [f64; 2], start: [f64; 2], label: &str) {
    let p = EnvParams::default();
    let gains = ImpedanceGains::uniform(PENDULUM_KP, PENDULUM_KD, 2).unwrap();
    let limiter = RateLimiter::new(8.0).unwrap();
    let mut filter = LowPassFilter::new(5.0, 0.04, 2).unwrap();
    let mut s = EnvState::at_rest(start);
    let mut last_ref = s.q;
    let mut held = 0usize;
    let mut reached_at = None;
    for step_i in 0..500 {
        let f = filter.step(&target).unwrap();
        let start_ref: Vec<f64> = (0..2).map(|j| s.q[j] + angle_diff(last_ref[j], s.q[j])).collect();
        let tgt: Vec<f64> = (0..2).map(|j| s.q[j] + angle_diff(f[j], s.q[j])).collect();
        let refs = interpolate_and_limit(&start_ref, &tgt, 40, 0.001, limiter).unwrap();
        for r in &refs {
            let r_eff: Vec<f64> = (0..2).map(|j| s.q[j] + angle_diff(r[j], s.q[j])).collect();
            let tau = impedance_torque(&r_eff, &s.q, &s.qd, &gains, p.torque_limit).unwrap();
            s = step(&p, &s, &tau).unwrap();
        }
        last_ref = [wrap_angle(refs[39][0]), wrap_angle(refs[39][1])];
        if in_upright_band(&s) { held += 1; if held >= 25 && reached_at.is_none() { reached_at = Some(step_i); } } else { held = 0; }
    }
    println!("{label}: final q=({:.2},{:.2}) qd=({:.2},{:.2}) from-upright {:.1}deg success_at={:?}",
        s.q[0], s.q[1], s.qd[0], s.qd[1], angle_from_upright(&s)*57.3, reached_at);
}

fn main() {
    drive([0.0, 2.9], [0.0, 0.0], "fold-up from hanging");
    drive([0.0, 2.9], [std::f64::consts::PI/2.0, 0.0], "fold-up from horizontal");
    drive([0.0, 2.9], [0.5, 0.4], "fold-up from spinning-ish");
    drive([std::f64::consts::PI, 0.0], [std::f64::consts::PI, 0.0], "hold both-up");
    drive([0.0, 2.9], [std::f64::consts::PI, 0.0], "fold-up from both-up");
}
