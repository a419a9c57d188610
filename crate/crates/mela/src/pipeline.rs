//! Transforms policy-rate joint references into control-rate torques:
//! first-order Butterworth low-pass on the reference, linear interpolation
//! with per-substep speed limiting, and the spring-damper joint law.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// First-order Butterworth low-pass, one state per action channel.
///
/// Discretised by the bilinear transform, which places the -3 dB point at
/// the cutoff exactly: with `w = tan(pi * fc * dt)`,
/// `y_k = b (u_k + u_{k-1}) + a y_{k-1}`, `a = (1 - w) / (1 + w)`,
/// `b = w / (1 + w)`. DC gain is exactly 1.
#[derive(Debug, Clone)]
pub struct LowPassFilter {
    a: f64,
    b: f64,
    prev_in: Vec<f64>,
    prev_out: Vec<f64>,
    primed: bool,
}

impl LowPassFilter {
    pub fn new(cutoff_hz: f64, dt: f64, channels: usize) -> Result<Self> {
        if cutoff_hz <= 0.0 || dt <= 0.0 {
            return Err(Error::contract("LowPassFilter::new", "cutoff and dt must be > 0"));
        }
        if cutoff_hz >= 0.5 / dt {
            return Err(Error::contract(
                "LowPassFilter::new",
                format!("cutoff {cutoff_hz} Hz at or above Nyquist {}", 0.5 / dt),
            ));
        }
        let w = (PI * cutoff_hz * dt).tan();
        Ok(LowPassFilter {
            a: (1.0 - w) / (1.0 + w),
            b: w / (1.0 + w),
            prev_in: vec![0.0; channels],
            prev_out: vec![0.0; channels],
            primed: false,
        })
    }

    /// Filter one sample per channel. The first call seeds the history with
    /// the sample itself so there is no startup transient.
    pub fn step(&mut self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.prev_in.len() {
            return Err(Error::shape(
                "lowpass_step",
                format!("{} channels, got {}", self.prev_in.len(), u.len()),
            ));
        }
        if !self.primed {
            self.prev_in.copy_from_slice(u);
            self.prev_out.copy_from_slice(u);
            self.primed = true;
            return Ok(u.to_vec());
        }
        let mut out = Vec::with_capacity(u.len());
        for (j, &uj) in u.iter().enumerate() {
            let y = self.b * (uj + self.prev_in[j]) + self.a * self.prev_out[j];
            self.prev_in[j] = uj;
            self.prev_out[j] = y;
            out.push(y);
        }
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.primed = false;
        self.prev_in.iter_mut().for_each(|v| *v = 0.0);
        self.prev_out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Maximum joint reference speed, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateLimiter {
    pub max_speed: f64,
}

impl RateLimiter {
    pub fn new(max_speed: f64) -> Result<Self> {
        if max_speed <= 0.0 {
            return Err(Error::contract("RateLimiter::new", "speed limit must be > 0"));
        }
        Ok(RateLimiter { max_speed })
    }
}

/// Linear ramp from `prev_ref` to `next_ref` over `substeps` intervals of
/// `dt` seconds, clipping each increment to the speed limit. When clipped,
/// the final sample undershoots `next_ref`.
pub fn interpolate_and_limit(
    prev_ref: &[f64],
    next_ref: &[f64],
    substeps: usize,
    dt: f64,
    limiter: RateLimiter,
) -> Result<Vec<Vec<f64>>> {
    if substeps < 1 {
        return Err(Error::contract("interpolate_and_limit", "substeps must be >= 1"));
    }
    if prev_ref.len() != next_ref.len() {
        return Err(Error::shape(
            "interpolate_and_limit",
            format!("{} vs {} joints", prev_ref.len(), next_ref.len()),
        ));
    }
    let max_step = limiter.max_speed * dt;
    let mut out = Vec::with_capacity(substeps);
    let mut current = prev_ref.to_vec();
    for s in 0..substeps {
        let remaining = (substeps - s) as f64;
        for (j, c) in current.iter_mut().enumerate() {
            let increment = (next_ref[j] - *c) / remaining;
            *c += increment.clamp(-max_step, max_step);
        }
        out.push(current.clone());
    }
    Ok(out)
}

/// Per-joint stiffness (Nm/rad) and damping (Nms/rad).
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl ImpedanceGains {
    pub fn new(kp: Vec<f64>, kd: Vec<f64>) -> Result<Self> {
        if kp.len() != kd.len() || kp.is_empty() {
            return Err(Error::shape("ImpedanceGains::new", "kp/kd length mismatch"));
        }
        if kp.iter().chain(&kd).any(|&g| g < 0.0) {
            return Err(Error::contract("ImpedanceGains::new", "gains must be >= 0"));
        }
        Ok(ImpedanceGains { kp, kd })
    }

    pub fn uniform(kp: f64, kd: f64, joints: usize) -> Result<Self> {
        ImpedanceGains::new(vec![kp; joints], vec![kd; joints])
    }

    /// Gains of the reference quadruped's joint-level controller.
    pub fn robot_reference(joints: usize) -> Self {
        ImpedanceGains::uniform(700.0, 10.0, joints).expect("positive gains")
    }
}

/// Spring-damper torque `tau_j = kp_j (qd_j - qm_j) - kd_j qdot_j`,
/// saturated at `tau_limit`.
pub fn impedance_torque(
    q_desired: &[f64],
    q_measured: &[f64],
    qdot_measured: &[f64],
    gains: &ImpedanceGains,
    tau_limit: f64,
) -> Result<Vec<f64>> {
    let n = gains.kp.len();
    if q_desired.len() != n || q_measured.len() != n || qdot_measured.len() != n {
        return Err(Error::shape(
            "impedance_torque",
            format!(
                "gains for {n} joints, got {}/{}/{}",
                q_desired.len(),
                q_measured.len(),
                qdot_measured.len()
            ),
        ));
    }
    Ok((0..n)
        .map(|j| {
            let raw = gains.kp[j] * (q_desired[j] - q_measured[j]) - gains.kd[j] * qdot_measured[j];
            raw.clamp(-tau_limit, tau_limit)
        })
        .collect())
}
