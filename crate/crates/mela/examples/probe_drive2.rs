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
    println!("{label}: final q=({:.2},{:.2}) from-upright {:.1}deg success_at={:?}",
        s.q[0], s.q[1], angle_from_upright(&s)*57.3, reached_at);
}

fn main() {
    for t2 in [3.0, 3.1, 3.14] {
        drive([0.0, t2], [0.0, 0.0], &format!("ref (0,{t2})"));
    }
    drive([0.2, 3.1], [0.0, 0.0], "ref (0.2,3.1)");
    drive([-0.2, -3.1], [0.0, 0.0], "ref (-0.2,-3.1) mirror");
}
