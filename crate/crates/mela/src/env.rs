//! Deterministic planar two-link pendulum with impedance-mode joints.
//!
//! The plant is a fully-actuated double pendulum integrated at 1 kHz with
//! semi-implicit Euler. Link 2 plays the role of the body: its orientation
//! drives the pose reward, its endpoint ("tip") supplies height, velocity,
//! and goal distances. Angles are measured from the downward vertical;
//! joint 2 is relative to link 1. Upright therefore means the absolute
//! link-2 angle sits at pi.
//!
//! Three task analogs share the plant: recovery to an upright band from a
//! nine-pose catalogue, phase-locked rhythmic swinging around an upright
//! fold, and multimodal target-following that mixes both plus a sampled
//! goal held fixed within each episode.

use crate::error::{Error, Result};
use crate::reward::{FeatureRecord, PhaseClock, RewardSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::Range;

/// Plant constants. The values are desk-scale inventions; only the 1 kHz
/// control split is inherited from the reference system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub link_lengths: [f64; 2],
    pub link_masses: [f64; 2],
    pub gravity: f64,
    /// Viscous joint damping, Nms/rad.
    pub joint_damping: f64,
    pub torque_limit: f64,
    pub dt: f64,
}

impl Default for EnvParams {
    fn default() -> Self {
        EnvParams {
            link_lengths: [0.5, 0.5],
            link_masses: [1.0, 1.0],
            gravity: 9.81,
            joint_damping: 0.05,
            torque_limit: 5.0,
            dt: 1e-3,
        }
    }
}

/// Joint-space impedance gains scaled to the pendulum plant. Stiff enough
/// that small reference offsets reach the torque cap, mirroring the
/// high-gain joint controller the smoothing loss was designed around.
pub const PENDULUM_KP: f64 = 150.0;
pub const PENDULUM_KD: f64 = 3.0;

/// Phase period of the rhythmic reference, seconds (1.67 Hz).
pub const PHASE_PERIOD: f64 = 0.6;

/// Rhythmic reference: base joint pose and swing amplitude. The pose keeps
/// the absolute link-2 angle constant while link 1 swings.
pub const REF_BASE: [f64; 2] = [0.0, 2.7];
pub const REF_AMPLITUDE: f64 = 0.3;

/// Upright band of the recovery task: link-2 within 15 degrees of
/// vertical with joint speeds below 1 rad/s.
pub const UPRIGHT_BAND_ANGLE: f64 = 15.0 * PI / 180.0;
pub const UPRIGHT_BAND_SPEED: f64 = 1.0;

/// Goal sampling annulus for the multimodal task, metres from the base.
pub const GOAL_RADIUS_MIN: f64 = 0.3;
pub const GOAL_RADIUS_MAX: f64 = 1.0;

/// Joint speed beyond which a locomotion-type episode counts as runaway.
pub const RUNAWAY_SPEED: f64 = 25.0;

/// Tip-goal distance below which the multimodal mode counts as on-goal.
pub const GOAL_NEAR_DISTANCE: f64 = 0.3;

/// Link-2 angle from upright beyond which multimodal steps are labelled
/// as recovery.
pub const MODE_RECOVERY_ANGLE: f64 = PI / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Recovery,
    Rhythmic,
    Multimodal,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Recovery => "recovery",
            Task::Rhythmic => "rhythmic",
            Task::Multimodal => "multimodal",
        }
    }

    pub fn from_name(s: &str) -> Result<Task> {
        match s {
            "recovery" => Ok(Task::Recovery),
            "rhythmic" => Ok(Task::Rhythmic),
            "multimodal" => Ok(Task::Multimodal),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }

    pub fn reward_spec(&self) -> RewardSpec {
        match self {
            Task::Recovery => RewardSpec::recovery_pendulum(),
            Task::Rhythmic => RewardSpec::rhythmic_pendulum(),
            Task::Multimodal => RewardSpec::multimodal_pendulum(),
        }
    }
}

/// Step annotation used for activation analysis on the multimodal task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeLabel {
    Recovery,
    Rhythmic,
    GoalTracking,
}

impl ModeLabel {
    pub fn name(&self) -> &'static str {
        match self {
            ModeLabel::Recovery => "recovery",
            ModeLabel::Rhythmic => "rhythmic",
            ModeLabel::GoalTracking => "goal_tracking",
        }
    }
}

/// Pendulum configuration, rates, clock, and episode goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    /// Joint angles, wrapped to (-pi, pi].
    pub q: [f64; 2],
    pub qd: [f64; 2],
    pub t: f64,
    /// Planar tip target, fixed for the episode (multimodal only).
    pub goal: Option<[f64; 2]>,
    pub phase: PhaseClock,
}

impl EnvState {
    pub fn at_rest(q: [f64; 2]) -> Self {
        EnvState {
            q: [wrap_angle(q[0]), wrap_angle(q[1])],
            qd: [0.0, 0.0],
            t: 0.0,
            goal: None,
            phase: PhaseClock::new(PHASE_PERIOD).expect("positive period"),
        }
    }
}

/// Named initial configurations (q1, q2, qd1, qd2).
#[derive(Debug, Clone)]
pub struct InitCatalogue {
    pub entries: Vec<(&'static str, [f64; 4])>,
}

impl Default for InitCatalogue {
    fn default() -> Self {
        InitCatalogue {
            entries: vec![
                ("upright", [PI, 0.0, 0.0, 0.0]),
                ("hanging", [0.0, 0.0, 0.0, 0.0]),
                ("folded-left", [0.0, 2.6, 0.0, 0.0]),
                ("folded-right", [0.0, -2.6, 0.0, 0.0]),
                ("horizontal-left", [-PI / 2.0, 0.0, 0.0, 0.0]),
                ("horizontal-right", [PI / 2.0, 0.0, 0.0, 0.0]),
                ("near-upright-perturbed", [PI - 0.25, 0.15, 0.3, -0.2]),
                ("fast-spinning", [0.5, 0.4, 6.0, -5.0]),
                ("crouched", [0.9, 1.5, 0.0, 0.0]),
            ],
        }
    }
}

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    PI - (PI - a).rem_euclid(2.0 * PI)
}

/// Shortest signed angular difference a - b, in (-pi, pi].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

// ── kinematics ──────────────────────────────────────────────────────────

/// Absolute link-2 angle from the downward vertical.
pub fn link2_angle(state: &EnvState) -> f64 {
    state.q[0] + state.q[1]
}

/// Unsigned link-2 deviation from upright.
pub fn angle_from_upright(state: &EnvState) -> f64 {
    angle_diff(link2_angle(state), PI).abs()
}

/// Tip position (x, z) with the base pivot at the origin.
pub fn tip_position(params: &EnvParams, state: &EnvState) -> [f64; 2] {
    let [l1, l2] = params.link_lengths;
    let t1 = state.q[0];
    let t2 = link2_angle(state);
    [
        l1 * t1.sin() + l2 * t2.sin(),
        -l1 * t1.cos() - l2 * t2.cos(),
    ]
}

/// Tip velocity (x, z).
pub fn tip_velocity(params: &EnvParams, state: &EnvState) -> [f64; 2] {
    let [l1, l2] = params.link_lengths;
    let t1 = state.q[0];
    let t2 = link2_angle(state);
    let w1 = state.qd[0];
    let w2 = state.qd[0] + state.qd[1];
    [
        l1 * t1.cos() * w1 + l2 * t2.cos() * w2,
        l1 * t1.sin() * w1 + l2 * t2.sin() * w2,
    ]
}

/// Body-orientation analog: the gravity direction expressed in the link-2
/// frame as (x, 0, z). Upright gives (0, 0, -1), hanging (0, 0, 1).
pub fn orientation_vector(state: &EnvState) -> [f64; 3] {
    let t2 = link2_angle(state);
    [-t2.sin(), 0.0, t2.cos()]
}

/// Angular rate of link 2 (yaw-rate analog).
pub fn body_rate(state: &EnvState) -> f64 {
    state.qd[0] + state.qd[1]
}

// ── dynamics ────────────────────────────────────────────────────────────

/// One 1 kHz substep: semi-implicit Euler on the two-link manipulator
/// equations (uniform thin rods) with viscous joint damping.
pub fn step(params: &EnvParams, state: &EnvState, tau: &[f64]) -> Result<EnvState> {
    if tau.len() != 2 {
        return Err(Error::shape("env_step", format!("2 torques, got {}", tau.len())));
    }
    if !tau.iter().all(|v| v.is_finite()) {
        return Err(Error::contract("env_step", "non-finite torque"));
    }
    if tau.iter().any(|&v| v.abs() > params.torque_limit + 1e-9) {
        return Err(Error::contract(
            "env_step",
            format!("torque beyond the limit {}", params.torque_limit),
        ));
    }

    let [l1, l2] = params.link_lengths;
    let [m1, m2] = params.link_masses;
    let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
    let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
    let g = params.gravity;

    let (q1, q2) = (state.q[0], state.q[1]);
    let (w1, w2) = (state.qd[0], state.qd[1]);

    let alpha = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2);
    let beta = m2 * l1 * lc2;
    let delta = i2 + m2 * lc2 * lc2;

    let c2 = q2.cos();
    let s2 = q2.sin();
    let m11 = alpha + 2.0 * beta * c2;
    let m12 = delta + beta * c2;
    let m22 = delta;

    // Coriolis/centrifugal vector.
    let h1 = -beta * s2 * (2.0 * w1 * w2 + w2 * w2);
    let h2 = beta * s2 * w1 * w1;

    let t2abs = q1 + q2;
    let g1 = (m1 * lc1 + m2 * l1) * g * q1.sin() + m2 * lc2 * g * t2abs.sin();
    let g2 = m2 * lc2 * g * t2abs.sin();

    let rhs1 = tau[0] - h1 - g1 - params.joint_damping * w1;
    let rhs2 = tau[1] - h2 - g2 - params.joint_damping * w2;

    let det = m11 * m22 - m12 * m12;
    let a1 = (m22 * rhs1 - m12 * rhs2) / det;
    let a2 = (m11 * rhs2 - m12 * rhs1) / det;

    let dt = params.dt;
    let qd = [w1 + a1 * dt, w2 + a2 * dt];
    let q = [
        wrap_angle(q1 + qd[0] * dt),
        wrap_angle(q2 + qd[1] * dt),
    ];
    let mut phase = state.phase;
    phase.advance(dt);
    Ok(EnvState {
        q,
        qd,
        t: state.t + dt,
        goal: state.goal,
        phase,
    })
}

// ── episodes ────────────────────────────────────────────────────────────

/// Draw an initial state for the task. Recovery picks uniformly from the
/// catalogue; rhythmic starts near the reference pose at phase zero;
/// multimodal draws from the full catalogue and samples a goal uniformly
/// over the annulus, fixed for the episode.
pub fn reset(
    task: Task,
    catalogue: &InitCatalogue,
    rng: &mut impl Rng,
) -> Result<EnvState> {
    if catalogue.entries.is_empty() {
        return Err(Error::contract("env_reset", "empty init catalogue"));
    }
    let mut state = match task {
        Task::Recovery | Task::Multimodal => {
            let idx = rng.gen_range(0..catalogue.entries.len());
            let [q1, q2, w1, w2] = catalogue.entries[idx].1;
            let mut s = EnvState::at_rest([q1, q2]);
            s.qd = [w1, w2];
            s
        }
        Task::Rhythmic => {
            let jitter = 0.05;
            let q = [
                REF_BASE[0] + rng.gen_range(-jitter..jitter),
                REF_BASE[1] + rng.gen_range(-jitter..jitter),
            ];
            EnvState::at_rest(q)
        }
    };
    if task == Task::Multimodal {
        let r2 = rng.gen_range(GOAL_RADIUS_MIN * GOAL_RADIUS_MIN..GOAL_RADIUS_MAX * GOAL_RADIUS_MAX);
        let r = r2.sqrt();
        let theta = rng.gen_range(0.0..2.0 * PI);
        state.goal = Some([r * theta.cos(), r * theta.sin()]);
    }
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    Runaway,
    Orientation,
    Timeout,
}

/// First triggered termination criterion, if any. Recovery tasks run to
/// the time limit only; the multimodal task keeps the runaway guard but
/// not the orientation cut, because its episodes begin in fallen poses.
pub fn terminate(state: &EnvState, task: Task, time_limit: f64) -> Option<TerminationReason> {
    if task != Task::Recovery && state.qd.iter().any(|w| w.abs() > RUNAWAY_SPEED) {
        return Some(TerminationReason::Runaway);
    }
    if task == Task::Rhythmic && angle_from_upright(state) > PI / 2.0 {
        return Some(TerminationReason::Orientation);
    }
    if state.t >= time_limit - 1e-9 {
        return Some(TerminationReason::Timeout);
    }
    None
}

/// True when the state sits inside the recovery success band.
pub fn in_upright_band(state: &EnvState) -> bool {
    angle_from_upright(state) <= UPRIGHT_BAND_ANGLE
        && state.qd.iter().all(|w| w.abs() < UPRIGHT_BAND_SPEED)
}

/// Step annotation for the multimodal task.
pub fn mode_label(params: &EnvParams, state: &EnvState) -> ModeLabel {
    if angle_from_upright(state) > MODE_RECOVERY_ANGLE {
        return ModeLabel::Recovery;
    }
    if let Some(goal) = state.goal {
        let tip = tip_position(params, state);
        let d = ((goal[0] - tip[0]).powi(2) + (goal[1] - tip[1]).powi(2)).sqrt();
        if d > GOAL_NEAR_DISTANCE {
            return ModeLabel::GoalTracking;
        }
    }
    ModeLabel::Rhythmic
}

// ── references ──────────────────────────────────────────────────────────

/// Phase-indexed joint reference of the rhythmic gait. The two joints
/// swing in antiphase so the absolute link-2 angle stays constant.
pub fn joint_reference(phase: f64) -> [f64; 2] {
    let s = (2.0 * PI * phase).sin();
    [
        REF_BASE[0] + REF_AMPLITUDE * s,
        REF_BASE[1] - REF_AMPLITUDE * s,
    ]
}

/// Joint-rate reference matching [`joint_reference`].
pub fn joint_reference_rate(phase: f64, period: f64) -> [f64; 2] {
    let c = (2.0 * PI * phase).cos() * 2.0 * PI / period;
    [REF_AMPLITUDE * c, -REF_AMPLITUDE * c]
}

fn reference_state(phase: f64, period: f64) -> EnvState {
    let q = joint_reference(phase);
    let qd = joint_reference_rate(phase, period);
    let mut s = EnvState::at_rest(q);
    s.qd = qd;
    s
}

// ── observations ────────────────────────────────────────────────────────

/// Which network an observation vector feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetInput {
    /// Orientation, body rate, tip velocity, relative goal (8 values).
    Gating,
    /// Joints, orientation, body rate, tip velocity, phase (10 values).
    Synthesized,
    /// Joints, orientation, body rate (6 values).
    Stage1Recovery,
    /// Same layout as [`NetInput::Synthesized`].
    Stage1Rhythmic,
}

pub const OBS_DIM_RECOVERY: usize = 6;
pub const OBS_DIM_RHYTHMIC: usize = 10;
pub const OBS_DIM_SYNTHESIZED: usize = 10;
pub const OBS_DIM_GATING: usize = 8;
pub const OBS_DIM_MULTIMODAL_FULL: usize = 12;
pub const ACTION_DIM: usize = 2;

/// Fixed-order observation for one network input.
pub fn observe(params: &EnvParams, state: &EnvState, net: NetInput) -> Result<Vec<f64>> {
    let phi = orientation_vector(state);
    let w = body_rate(state);
    match net {
        NetInput::Stage1Recovery => Ok(vec![
            state.q[0], state.q[1], phi[0], phi[1], phi[2], w,
        ]),
        NetInput::Synthesized | NetInput::Stage1Rhythmic => {
            let v = tip_velocity(params, state);
            let p = state.phase.vector();
            Ok(vec![
                state.q[0], state.q[1], phi[0], phi[1], phi[2], w, v[0], v[1], p[0], p[1],
            ])
        }
        NetInput::Gating => {
            let goal = state.goal.ok_or_else(|| {
                Error::contract("observe", "gating input needs a goal; task has none")
            })?;
            let v = tip_velocity(params, state);
            let tip = tip_position(params, state);
            Ok(vec![
                phi[0],
                phi[1],
                phi[2],
                w,
                v[0],
                v[1],
                goal[0] - tip[0],
                goal[1] - tip[1],
            ])
        }
    }
}

/// Stored per-transition observation: the union of every network input for
/// the task. Stage-1 tasks store exactly their own layout; the multimodal
/// union appends the relative goal after the synthesized block.
pub fn observe_full(params: &EnvParams, state: &EnvState, task: Task) -> Result<Vec<f64>> {
    match task {
        Task::Recovery => observe(params, state, NetInput::Stage1Recovery),
        Task::Rhythmic => observe(params, state, NetInput::Stage1Rhythmic),
        Task::Multimodal => {
            let mut v = observe(params, state, NetInput::Synthesized)?;
            let goal = state.goal.ok_or_else(|| {
                Error::contract("observe", "multimodal state has no goal")
            })?;
            let tip = tip_position(params, state);
            v.push(goal[0] - tip[0]);
            v.push(goal[1] - tip[1]);
            Ok(v)
        }
    }
}

/// Slice map from the stored observation to each consumer, plus where the
/// measured joint positions live (for the smoothing loss).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsLayout {
    pub dim: usize,
    pub joint_positions: Range<usize>,
    pub policy: Range<usize>,
    /// Gating input as contiguous pieces of the stored vector; empty for
    /// single-expert tasks.
    pub gating_parts: Vec<Range<usize>>,
}

impl ObsLayout {
    pub fn for_task(task: Task) -> ObsLayout {
        match task {
            Task::Recovery => ObsLayout {
                dim: OBS_DIM_RECOVERY,
                joint_positions: 0..2,
                policy: 0..OBS_DIM_RECOVERY,
                gating_parts: vec![],
            },
            Task::Rhythmic => ObsLayout {
                dim: OBS_DIM_RHYTHMIC,
                joint_positions: 0..2,
                policy: 0..OBS_DIM_RHYTHMIC,
                gating_parts: vec![],
            },
            Task::Multimodal => ObsLayout {
                dim: OBS_DIM_MULTIMODAL_FULL,
                joint_positions: 0..2,
                policy: 0..OBS_DIM_SYNTHESIZED,
                gating_parts: vec![2..8, 10..12],
            },
        }
    }

    pub fn gating_dim(&self) -> usize {
        self.gating_parts.iter().map(|r| r.len()).sum()
    }

    pub fn extract_policy(&self, full: &[f64]) -> Vec<f64> {
        full[self.policy.clone()].to_vec()
    }

    pub fn extract_gating(&self, full: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.gating_dim());
        for r in &self.gating_parts {
            out.extend_from_slice(&full[r.clone()]);
        }
        out
    }
}

// ── features ────────────────────────────────────────────────────────────

/// Map the pendulum state onto the abstract feature record. Quantities
/// only a legged robot produces stay absent.
pub fn features(params: &EnvParams, state: &EnvState, tau: &[f64], task: Task) -> FeatureRecord {
    let tip = tip_position(params, state);
    let vel = tip_velocity(params, state);
    let mut f = FeatureRecord {
        orientation: Some(orientation_vector(state).to_vec()),
        height: Some(tip[1]),
        velocity: Some(vel.to_vec()),
        yaw_rate: Some(body_rate(state)),
        joint_positions: Some(state.q.to_vec()),
        joint_velocities: Some(state.qd.to_vec()),
        joint_torques: Some(tau.to_vec()),
        ..FeatureRecord::default()
    };

    match task {
        Task::Recovery => {
            f.height_target = Some(0.0);
            f.velocity_target = Some(vec![0.0, 0.0]);
        }
        Task::Rhythmic => {
            let phase = state.phase.phase();
            let period = state.phase.period;
            f.joint_reference = Some(joint_reference(phase).to_vec());
            let r = reference_state(phase, period);
            f.height_target = Some(tip_position(params, &r)[1]);
            f.velocity_target = Some(tip_velocity(params, &r).to_vec());
        }
        Task::Multimodal => {
            let phase = state.phase.phase();
            f.joint_reference = Some(joint_reference(phase).to_vec());
            if let Some(goal) = state.goal {
                let dx = goal[0] - tip[0];
                let dz = goal[1] - tip[1];
                let dist = (dx * dx + dz * dz).sqrt();
                f.goal_position = Some(goal.to_vec());
                f.body_position = Some(tip.to_vec());
                f.height_target = Some(goal[1]);
                let v_des = if dist > 0.15 { 0.3 } else { 0.0 };
                if dist > 1e-9 {
                    f.velocity_target = Some(vec![v_des * dx / dist, v_des * dz / dist]);
                    // Goal direction in the link-2 frame: x along the link
                    // axis, z along the in-plane perpendicular.
                    let t2 = link2_angle(state);
                    let axis = [t2.sin(), -t2.cos()];
                    let perp = [t2.cos(), t2.sin()];
                    let (ux, uz) = (dx / dist, dz / dist);
                    f.goal_heading = Some(vec![
                        ux * axis[0] + uz * axis[1],
                        0.0,
                        ux * perp[0] + uz * perp[1],
                    ]);
                } else {
                    f.velocity_target = Some(vec![0.0, 0.0]);
                    f.goal_heading = Some(vec![1.0, 0.0, 0.0]);
                }
            }
        }
    }
    f
}

/// Step reward for the task.
pub fn reward(params: &EnvParams, state: &EnvState, tau: &[f64], task: Task) -> Result<f64> {
    task.reward_spec().total(&features(params, state, tau, task))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Independent energy oracle: kinetic energy from per-link rigid-body
    /// velocities plus gravitational potential, never via the mass matrix.
    fn total_energy(p: &EnvParams, s: &EnvState) -> f64 {
        let [l1, l2] = p.link_lengths;
        let [m1, m2] = p.link_masses;
        let (lc1, lc2) = (0.5 * l1, 0.5 * l2);
        let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
        let t1 = s.q[0];
        let t2 = s.q[0] + s.q[1];
        let w1 = s.qd[0];
        let w2 = s.qd[0] + s.qd[1];

        let ke1 = 0.5 * m1 * (lc1 * w1).powi(2) + 0.5 * i1 * w1 * w1;
        let vcx = l1 * t1.cos() * w1 + lc2 * t2.cos() * w2;
        let vcz = l1 * t1.sin() * w1 + lc2 * t2.sin() * w2;
        let ke2 = 0.5 * m2 * (vcx * vcx + vcz * vcz) + 0.5 * i2 * w2 * w2;

        let pe = -p.gravity * (m1 * lc1 * t1.cos() + m2 * (l1 * t1.cos() + lc2 * t2.cos()));
        ke1 + ke2 + pe
    }

    #[test]
    fn hanging_equilibrium_is_stationary() {
        let p = EnvParams::default();
        let mut s = EnvState::at_rest([0.0, 0.0]);
        for _ in 0..1000 {
            s = step(&p, &s, &[0.0, 0.0]).unwrap();
        }
        assert!(s.q[0].abs() < 1e-9 && s.q[1].abs() < 1e-9);
        assert!(s.qd[0].abs() < 1e-9 && s.qd[1].abs() < 1e-9);
    }

    #[test]
    fn undamped_energy_drift_below_half_percent_per_second() {
        let mut p = EnvParams::default();
        p.joint_damping = 0.0;
        // Release from 45 degrees: a large free swing while staying out of
        // the chaotic whip regime where a first-order step cannot hold
        // the budget at this dt.
        let s0 = EnvState::at_rest([PI / 4.0, 0.0]);
        let e0 = total_energy(&p, &s0);
        let mut s = s0;
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            s = step(&p, &s, &[0.0, 0.0]).unwrap();
            worst = worst.max((total_energy(&p, &s) - e0).abs());
        }
        let scale = e0.abs().max(1.0);
        assert!(worst / scale < 0.005, "relative drift {}", worst / scale);
    }

    #[test]
    fn inverted_equilibrium_diverges_under_perturbation() {
        let p = EnvParams::default();
        let mut s = EnvState::at_rest([PI - 1e-4, 0.0]);
        for _ in 0..4000 {
            s = step(&p, &s, &[0.0, 0.0]).unwrap();
        }
        assert!(angle_diff(s.q[0], PI).abs() > 0.01, "still at upright: {:?}", s.q);
    }

    #[test]
    fn step_rejects_out_of_range_torque() {
        let p = EnvParams::default();
        let s = EnvState::at_rest([0.0, 0.0]);
        assert!(step(&p, &s, &[6.0, 0.0]).is_err());
        assert!(step(&p, &s, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn angles_stay_wrapped() {
        let p = EnvParams::default();
        let mut s = EnvState::at_rest([3.0, -3.0]);
        s.qd = [20.0, -20.0];
        for _ in 0..2000 {
            s = step(&p, &s, &[0.0, 0.0]).unwrap();
            assert!(s.q[0] > -PI && s.q[0] <= PI + 1e-12);
            assert!(s.q[1] > -PI && s.q[1] <= PI + 1e-12);
        }
    }

    #[test]
    fn seeded_reset_is_deterministic() {
        let cat = InitCatalogue::default();
        for task in [Task::Recovery, Task::Rhythmic, Task::Multimodal] {
            let mut r1 = ChaCha12Rng::seed_from_u64(5);
            let mut r2 = ChaCha12Rng::seed_from_u64(5);
            let a = reset(task, &cat, &mut r1).unwrap();
            let b = reset(task, &cat, &mut r2).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn multimodal_resets_cover_every_catalogue_entry() {
        let cat = InitCatalogue::default();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let mut seen = vec![false; cat.entries.len()];
        for _ in 0..10_000 {
            let s = reset(Task::Multimodal, &cat, &mut rng).unwrap();
            for (i, (_, e)) in cat.entries.iter().enumerate() {
                if (wrap_angle(e[0]) - s.q[0]).abs() < 1e-12
                    && (wrap_angle(e[1]) - s.q[1]).abs() < 1e-12
                    && (e[2] - s.qd[0]).abs() < 1e-12
                {
                    seen[i] = true;
                }
            }
        }
        assert!(seen.iter().all(|&b| b), "coverage {seen:?}");
    }

    #[test]
    fn sampled_goals_stay_in_the_annulus() {
        let cat = InitCatalogue::default();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let s = reset(Task::Multimodal, &cat, &mut rng).unwrap();
            let g = s.goal.unwrap();
            let r = (g[0] * g[0] + g[1] * g[1]).sqrt();
            assert!((GOAL_RADIUS_MIN..=GOAL_RADIUS_MAX).contains(&r), "radius {r}");
        }
    }

    #[test]
    fn recovery_never_terminates_before_timeout() {
        // Inverted-hang analog state, high speed: recovery keeps going.
        let mut s = EnvState::at_rest([0.0, 0.0]);
        s.qd = [30.0, 0.0];
        s.t = 1.0;
        assert_eq!(terminate(&s, Task::Recovery, 20.0), None);
        s.t = 20.0;
        assert_eq!(terminate(&s, Task::Recovery, 20.0), Some(TerminationReason::Timeout));
    }

    #[test]
    fn rhythmic_orientation_cut_at_ninety_degrees() {
        // Link 2 at 91 degrees from upright.
        let ang = PI - 91.0 * PI / 180.0;
        let s = EnvState::at_rest([0.0, ang]);
        assert_eq!(
            terminate(&s, Task::Rhythmic, 20.0),
            Some(TerminationReason::Orientation)
        );
        let ang_ok = PI - 89.0 * PI / 180.0;
        let s2 = EnvState::at_rest([0.0, ang_ok]);
        assert_eq!(terminate(&s2, Task::Rhythmic, 20.0), None);
    }

    #[test]
    fn observation_layouts_route_the_goal_and_phase() {
        let p = EnvParams::default();
        let cat = InitCatalogue::default();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let s = reset(Task::Multimodal, &cat, &mut rng).unwrap();

        let gating = observe(&p, &s, NetInput::Gating).unwrap();
        let syn = observe(&p, &s, NetInput::Synthesized).unwrap();
        let full = observe_full(&p, &s, Task::Multimodal).unwrap();
        assert_eq!(gating.len(), OBS_DIM_GATING);
        assert_eq!(syn.len(), OBS_DIM_SYNTHESIZED);
        assert_eq!(full.len(), OBS_DIM_MULTIMODAL_FULL);

        // The relative goal appears in the gating vector and the stored
        // union, never in the synthesized vector.
        let tip = tip_position(&p, &s);
        let goal = s.goal.unwrap();
        let rel = [goal[0] - tip[0], goal[1] - tip[1]];
        assert_eq!(&gating[6..8], &rel);
        assert_eq!(&full[10..12], &rel);
        for window in syn.windows(2) {
            assert!(window != rel || rel == [0.0, 0.0]);
        }

        // The layout map extracts exactly the per-network slices.
        let layout = ObsLayout::for_task(Task::Multimodal);
        assert_eq!(layout.extract_policy(&full), syn);
        assert_eq!(layout.extract_gating(&full), gating);

        // Phase block only exists in synthesized-style vectors.
        let rec = observe(&p, &s, NetInput::Stage1Recovery).unwrap();
        assert_eq!(rec.len(), OBS_DIM_RECOVERY);
        let phase = s.phase.vector();
        assert_eq!(&syn[8..10], &phase);
    }

    #[test]
    fn upright_rest_observation_is_nominal() {
        let p = EnvParams::default();
        let s = EnvState::at_rest([PI, 0.0]);
        let obs = observe(&p, &s, NetInput::Stage1Recovery).unwrap();
        // Orientation block reads (0, 0, -1); rates are zero.
        assert!(obs[2].abs() < 1e-12);
        assert!(obs[3].abs() < 1e-12);
        assert!((obs[4] + 1.0).abs() < 1e-12);
        assert!(obs[5].abs() < 1e-12);
    }

    #[test]
    fn feature_examples_hit_their_maxima() {
        let p = EnvParams::default();
        // Upright: pose term maximal.
        let s = EnvState::at_rest([PI, 0.0]);
        let f = features(&p, &s, &[0.0, 0.0], Task::Recovery);
        assert_eq!(
            crate::reward::term_value(crate::reward::TermKind::BasePose, &f).unwrap(),
            1.0
        );
        // Zero torque: regularisation term maximal.
        assert_eq!(
            crate::reward::term_value(crate::reward::TermKind::TorqueRegularisation, &f).unwrap(),
            1.0
        );
        // Goal at the tip: goal term maximal.
        let mut sm = EnvState::at_rest([0.0, 2.7]);
        sm.goal = Some(tip_position(&p, &sm));
        let fm = features(&p, &sm, &[0.0, 0.0], Task::Multimodal);
        assert_eq!(
            crate::reward::term_value(crate::reward::TermKind::GoalPosition, &fm).unwrap(),
            1.0
        );
    }

    #[test]
    fn deterministic_trajectories_for_equal_action_sequences() {
        let p = EnvParams::default();
        let run = || {
            let mut s = EnvState::at_rest([0.3, -0.8]);
            s.qd = [1.0, 0.5];
            let mut trace = Vec::new();
            for i in 0..500 {
                let tau = [2.0 * ((i as f64) * 0.01).sin(), -1.0];
                s = step(&p, &s, &tau).unwrap();
                trace.push(s.clone());
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn wrap_angle_covers_the_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!(wrap_angle(2.0 * PI).abs() < 1e-12);
        for k in -10..10 {
            let a = 0.3 + k as f64 * 2.0 * PI;
            assert!((wrap_angle(a) - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn mode_labels_follow_the_script() {
        let p = EnvParams::default();
        // Fallen: recovery.
        let mut s = EnvState::at_rest([0.0, 0.0]);
        s.goal = Some([0.8, 0.2]);
        assert_eq!(mode_label(&p, &s), ModeLabel::Recovery);
        // Upright, far goal: goal tracking.
        let mut s = EnvState::at_rest([0.0, 2.9]);
        s.goal = Some([-0.9, 0.3]);
        assert_eq!(mode_label(&p, &s), ModeLabel::GoalTracking);
        // Upright, goal at tip: rhythmic.
        let mut s = EnvState::at_rest([0.0, 2.9]);
        s.goal = Some(tip_position(&p, &s));
        assert_eq!(mode_label(&p, &s), ModeLabel::Rhythmic);
    }
}
