use mela::env::*;
use mela::pipeline::{impedance_torque, interpolate_and_limit, ImpedanceGains, LowPassFilter, RateLimiter};

fn drive(kp: f64, kd: f64, target: [f64; 2], start: [f64; 2], label: &str) {
    let p = EnvParams::default();
    let gains = ImpedanceGains::uniform(kp, kd, 2).unwrap();
    let limiter = RateLimiter::new(8.0).unwrap();
    let mut filter = LowPassFilter::new(5.0, 0.04, 2).unwrap();
    let mut s = EnvState::at_rest(start);
    let mut last_ref = s.q;
    let mut held = 0usize;
    let mut reached = None;
    for i in 0..500 {
        let f = filter.step(&target).unwrap();
        let st: Vec<f64> = (0..2).map(|j| s.q[j] + angle_diff(last_ref[j], s.q[j])).collect();
        let tg: Vec<f64> = (0..2).map(|j| s.q[j] + angle_diff(f[j], s.q[j])).collect();
        let refs = interpolate_and_limit(&st, &tg, 40, 0.001, limiter).unwrap();
        for r in &refs {
            let re: Vec<f64> = (0..2).map(|j| s.q[j] + angle_diff(r[j], s.q[j])).collect();
            let tau = impedance_torque(&re, &s.q, &s.qd, &gains, p.torque_limit).unwrap();
            s = step(&p, &s, &tau).unwrap();
        }
        last_ref = [wrap_angle(refs[39][0]), wrap_angle(refs[39][1])];
        if in_upright_band(&s) { held += 1; if held >= 25 && reached.is_none() { reached = Some(i); } } else { held = 0; }
    }
    println!("kp={kp} kd={kd} {label}: q=({:.3},{:.3}) from-up {:.1}deg success_at={:?}",
        s.q[0], s.q[1], angle_from_upright(&s)*57.3, reached);
}

fn main() {
    for (kp, kd) in [(150.0, 3.0), (150.0, 4.0), (200.0, 4.0)] {
        drive(kp, kd, [0.0, 2.9], [0.0, 0.0], "fold from hanging");
        drive(kp, kd, [0.0, 2.9], [std::f64::consts::PI, 0.0], "fold from upright");
        drive(kp, kd, [std::f64::consts::PI, 0.0], [std::f64::consts::PI - 0.25, 0.15], "hold both-up from perturbed");
        drive(kp, kd, [0.0, 2.9], [0.5, 0.4, ][..2].try_into().unwrap(), "fold from spinning");
    }
}
