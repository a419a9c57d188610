//! Bounded radial-basis rewards, the individual reward terms as pure
//! functions over an abstract feature record, per-task weightings, and the
//! phase-clock generator for rhythmic motion.
//!
//! Width parameters are the listed negative coefficients used verbatim in
//! the exponent, `reward = exp(width * ||target - x||^2)`, so every
//! continuous term lies in (0, 1] with its maximum exactly at the target.
//! Terms that only exist on a legged robot (foot contacts, placements)
//! stay computable from synthetic records even though the pendulum
//! environment never produces them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

// Listed width coefficients per term.
pub const WIDTH_POSE: f64 = -2.35;
pub const WIDTH_HEIGHT: f64 = -51.16;
pub const WIDTH_VELOCITY: f64 = -18.42;
pub const WIDTH_TORQUE_REG: f64 = -0.003;
pub const WIDTH_JOINT_VEL_REG: f64 = -0.026;
pub const WIDTH_YAW_VEL: f64 = -7.47;
pub const WIDTH_JOINT_REF: f64 = -29.88;
pub const WIDTH_HEADING: f64 = -2.35;
pub const WIDTH_GOAL: f64 = -0.74;
pub const WIDTH_SWING_STANCE: f64 = -460.50;
pub const WIDTH_FOOT_PLACEMENT: f64 = -18.42;
/// No listed width exists for foot clearance; reuse the height width.
pub const WIDTH_FOOT_CLEARANCE: f64 = WIDTH_HEIGHT;

/// Bounded radial basis: `exp(width * ||target - x||^2)`, width <= 0.
pub fn rbf(x: &[f64], target: &[f64], width: f64) -> Result<f64> {
    if x.len() != target.len() {
        return Err(Error::shape(
            "rbf",
            format!("x of {} vs target of {}", x.len(), target.len()),
        ));
    }
    if width > 0.0 {
        return Err(Error::contract("rbf", "positive width makes the reward unbounded"));
    }
    let d2: f64 = x
        .iter()
        .zip(target)
        .map(|(a, b)| (b - a) * (b - a))
        .sum();
    Ok((width * d2).exp())
}

pub fn rbf_scalar(x: f64, target: f64, width: f64) -> Result<f64> {
    rbf(&[x], &[target], width)
}

/// Phase clock of period `period` seconds; its output is the unit vector
/// `(sin(2 pi t / T), cos(2 pi t / T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseClock {
    pub period: f64,
    pub elapsed: f64,
}

impl PhaseClock {
    pub fn new(period: f64) -> Result<Self> {
        if period <= 0.0 {
            return Err(Error::contract("PhaseClock::new", "period must be > 0"));
        }
        Ok(PhaseClock {
            period,
            elapsed: 0.0,
        })
    }

    pub fn advance(&mut self, dt: f64) {
        self.elapsed += dt;
    }

    pub fn phase(&self) -> f64 {
        (self.elapsed / self.period).fract()
    }

    pub fn vector(&self) -> [f64; 2] {
        phase_vector(self.elapsed, self.period)
    }
}

pub fn phase_vector(t: f64, period: f64) -> [f64; 2] {
    let w = 2.0 * PI * t / period;
    [w.sin(), w.cos()]
}

/// Named physical quantities an environment supplies per step. Fields the
/// plant cannot produce stay `None`; asking a term for a missing feature is
/// a contract error naming both.
#[derive(Debug, Clone, Default)]
pub struct FeatureRecord {
    /// Body-orientation vector (gravity direction in the body frame).
    pub orientation: Option<Vec<f64>>,
    /// Nominal orientation target.
    pub orientation_target: Option<Vec<f64>>,
    pub height: Option<f64>,
    pub height_target: Option<f64>,
    /// Body linear velocity, world frame.
    pub velocity: Option<Vec<f64>>,
    pub velocity_target: Option<Vec<f64>>,
    /// Yaw-rate analog.
    pub yaw_rate: Option<f64>,
    pub joint_positions: Option<Vec<f64>>,
    /// Phase-indexed joint reference.
    pub joint_reference: Option<Vec<f64>>,
    pub joint_velocities: Option<Vec<f64>>,
    pub joint_torques: Option<Vec<f64>>,
    /// Unit vector toward the goal expressed in the body heading frame.
    pub goal_heading: Option<Vec<f64>>,
    pub goal_position: Option<Vec<f64>>,
    pub body_position: Option<Vec<f64>>,
    pub foot_heights: Option<Vec<f64>>,
    pub foot_height_targets: Option<Vec<f64>>,
    /// Horizontal foot velocities, one (x, y) pair per foot.
    pub foot_velocities: Option<Vec<[f64; 2]>>,
    /// Horizontal foot placements, one (x, y) pair per foot.
    pub foot_placements: Option<Vec<[f64; 2]>>,
    pub foot_contacts: Option<Vec<bool>>,
    pub foot_contacts_desired: Option<Vec<bool>>,
    pub body_contact: Option<bool>,
    pub foot_clearance_target: Option<f64>,
}

macro_rules! need {
    ($features:expr, $field:ident, $term:expr) => {
        $features.$field.as_ref().ok_or_else(|| {
            Error::contract(
                "term_value",
                format!("term {:?} needs feature `{}`", $term, stringify!($field)),
            )
        })?
    };
}

/// Every reward term. Continuous terms are radial-basis shaped; contact
/// terms are binary indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    BasePose,
    BaseHeight,
    BaseVelocity,
    TorqueRegularisation,
    JointVelocityRegularisation,
    FootGroundContact,
    BodyGroundContact,
    YawVelocity,
    FootClearance,
    JointReference,
    FootContactReference,
    FootPlacement,
    SwingAndStance,
    Heading,
    GoalPosition,
}

impl TermKind {
    pub const ALL: [TermKind; 15] = [
        TermKind::BasePose,
        TermKind::BaseHeight,
        TermKind::BaseVelocity,
        TermKind::TorqueRegularisation,
        TermKind::JointVelocityRegularisation,
        TermKind::FootGroundContact,
        TermKind::BodyGroundContact,
        TermKind::YawVelocity,
        TermKind::FootClearance,
        TermKind::JointReference,
        TermKind::FootContactReference,
        TermKind::FootPlacement,
        TermKind::SwingAndStance,
        TermKind::Heading,
        TermKind::GoalPosition,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TermKind::BasePose => "base_pose",
            TermKind::BaseHeight => "base_height",
            TermKind::BaseVelocity => "base_velocity",
            TermKind::TorqueRegularisation => "torque_regularisation",
            TermKind::JointVelocityRegularisation => "joint_velocity_regularisation",
            TermKind::FootGroundContact => "foot_ground_contact",
            TermKind::BodyGroundContact => "body_ground_contact",
            TermKind::YawVelocity => "yaw_velocity",
            TermKind::FootClearance => "foot_clearance",
            TermKind::JointReference => "joint_reference",
            TermKind::FootContactReference => "foot_contact_reference",
            TermKind::FootPlacement => "foot_placement",
            TermKind::SwingAndStance => "swing_and_stance",
            TermKind::Heading => "heading",
            TermKind::GoalPosition => "goal_position",
        }
    }

    pub fn from_name(name: &str) -> Option<TermKind> {
        TermKind::ALL.iter().copied().find(|t| t.name() == name)
    }
}

/// Evaluate one term on a feature record with Table-defaults for widths.
pub fn term_value(term: TermKind, f: &FeatureRecord) -> Result<f64> {
    term_value_with(term, f, None)
}

/// Point a term's configured target override at the matching record field.
fn apply_target_override(term: TermKind, f: &mut FeatureRecord, target: &[f64]) -> Result<()> {
    let scalar = |t: &[f64]| -> Result<f64> {
        if t.len() == 1 {
            Ok(t[0])
        } else {
            Err(Error::contract("reward_target_override", "expected a scalar target"))
        }
    };
    match term {
        TermKind::BasePose => f.orientation_target = Some(target.to_vec()),
        TermKind::BaseHeight => f.height_target = Some(scalar(target)?),
        TermKind::BaseVelocity => f.velocity_target = Some(target.to_vec()),
        TermKind::JointReference => f.joint_reference = Some(target.to_vec()),
        TermKind::FootClearance => f.foot_clearance_target = Some(scalar(target)?),
        other => {
            return Err(Error::contract(
                "reward_target_override",
                format!("term {other:?} has no overridable target"),
            ))
        }
    }
    Ok(())
}

/// Evaluate one term on a feature record. Radial-basis terms return a value
/// in (0, 1]; indicator terms exactly 0 or 1. `width` replaces the listed
/// coefficient when given.
pub fn term_value_with(term: TermKind, f: &FeatureRecord, width: Option<f64>) -> Result<f64> {
    match term {
        TermKind::BasePose => {
            let x = need!(f, orientation, term);
            let default_target = vec![0.0, 0.0, -1.0];
            let target = f.orientation_target.as_deref().unwrap_or(&default_target);
            rbf(x, target, width.unwrap_or(WIDTH_POSE))
        }
        TermKind::BaseHeight => {
            let x = *need!(f, height, term);
            let target = *need!(f, height_target, term);
            rbf_scalar(x, target, width.unwrap_or(WIDTH_HEIGHT))
        }
        TermKind::BaseVelocity => {
            let x = need!(f, velocity, term);
            let target = need!(f, velocity_target, term);
            rbf(x, target, width.unwrap_or(WIDTH_VELOCITY))
        }
        TermKind::TorqueRegularisation => {
            let x = need!(f, joint_torques, term);
            rbf(x, &vec![0.0; x.len()], width.unwrap_or(WIDTH_TORQUE_REG))
        }
        TermKind::JointVelocityRegularisation => {
            let x = need!(f, joint_velocities, term);
            rbf(x, &vec![0.0; x.len()], width.unwrap_or(WIDTH_JOINT_VEL_REG))
        }
        TermKind::FootGroundContact => {
            let contacts = need!(f, foot_contacts, term);
            Ok(if contacts.iter().any(|&c| c) { 1.0 } else { 0.0 })
        }
        TermKind::BodyGroundContact => {
            let body = *need!(f, body_contact, term);
            Ok(if body { 0.0 } else { 1.0 })
        }
        TermKind::YawVelocity => {
            let x = *need!(f, yaw_rate, term);
            rbf_scalar(x, 0.0, width.unwrap_or(WIDTH_YAW_VEL))
        }
        TermKind::FootClearance => {
            let heights = need!(f, foot_heights, term);
            let contacts = need!(f, foot_contacts, term);
            let target = *need!(f, foot_clearance_target, term);
            let swing: Vec<f64> = heights
                .iter()
                .zip(contacts)
                .filter(|(_, &c)| !c)
                .map(|(&h, _)| h)
                .collect();
            if swing.is_empty() {
                return Ok(1.0);
            }
            let mean = swing.iter().sum::<f64>() / swing.len() as f64;
            rbf_scalar(mean, target, width.unwrap_or(WIDTH_FOOT_CLEARANCE))
        }
        TermKind::JointReference => {
            let x = need!(f, joint_positions, term);
            let target = need!(f, joint_reference, term);
            rbf(x, target, width.unwrap_or(WIDTH_JOINT_REF))
        }
        TermKind::FootContactReference => {
            let contacts = need!(f, foot_contacts, term);
            let desired = need!(f, foot_contacts_desired, term);
            Ok(if contacts == desired { 1.0 } else { 0.0 })
        }
        TermKind::FootPlacement => {
            let feet = need!(f, foot_placements, term);
            let base = need!(f, body_position, term);
            let n = feet.len() as f64;
            let mean = [
                feet.iter().map(|p| p[0]).sum::<f64>() / n,
                feet.iter().map(|p| p[1]).sum::<f64>() / n,
            ];
            rbf(&mean, base, width.unwrap_or(WIDTH_FOOT_PLACEMENT))
        }
        TermKind::SwingAndStance => {
            let heights = need!(f, foot_heights, term);
            let targets = need!(f, foot_height_targets, term);
            let vels = need!(f, foot_velocities, term);
            let n = heights.len() as f64;
            let mut acc = [0.0f64; 2];
            for ((h, ht), v) in heights.iter().zip(targets).zip(vels) {
                let err = h - ht;
                acc[0] += err * v[0];
                acc[1] += err * v[1];
            }
            acc[0] /= n;
            acc[1] /= n;
            rbf(&acc, &[0.0, 0.0], width.unwrap_or(WIDTH_SWING_STANCE))
        }
        TermKind::Heading => {
            let x = need!(f, goal_heading, term);
            let mut target = vec![0.0; x.len()];
            target[0] = 1.0;
            rbf(x, &target, width.unwrap_or(WIDTH_HEADING))
        }
        TermKind::GoalPosition => {
            let goal = need!(f, goal_position, term);
            let base = need!(f, body_position, term);
            rbf(goal, base, width.unwrap_or(WIDTH_GOAL))
        }
    }
}

/// One weighted reward term, optionally overriding the built-in width or
/// the environment-supplied target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardTerm {
    pub kind: TermKind,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<Vec<f64>>,
}

impl RewardTerm {
    pub fn weighted(kind: TermKind, weight: f64) -> Self {
        RewardTerm {
            kind,
            weight,
            width: None,
            target: None,
        }
    }
}

/// A task's ordered, weighted list of reward terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub terms: Vec<RewardTerm>,
}

impl RewardSpec {
    pub fn new(terms: Vec<(TermKind, f64)>) -> Result<Self> {
        if terms.iter().any(|&(_, w)| w < 0.0 || !w.is_finite()) {
            return Err(Error::contract("RewardSpec::new", "weights must be >= 0"));
        }
        Ok(RewardSpec {
            terms: terms
                .into_iter()
                .map(|(kind, weight)| RewardTerm::weighted(kind, weight))
                .collect(),
        })
    }

    pub fn weight_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.weight).sum()
    }

    pub fn set_weight(&mut self, term: TermKind, weight: f64) {
        for entry in &mut self.terms {
            if entry.kind == term {
                entry.weight = weight;
                return;
            }
        }
        self.terms.push(RewardTerm::weighted(term, weight));
    }

    pub fn term_mut(&mut self, term: TermKind) -> &mut RewardTerm {
        if let Some(i) = self.terms.iter().position(|t| t.kind == term) {
            return &mut self.terms[i];
        }
        self.terms.push(RewardTerm::weighted(term, 0.0));
        self.terms.last_mut().expect("just pushed")
    }

    fn eval_term(term: &RewardTerm, features: &FeatureRecord) -> Result<f64> {
        if term.target.is_none() {
            return term_value_with(term.kind, features, term.width);
        }
        let mut patched = features.clone();
        apply_target_override(term.kind, &mut patched, term.target.as_ref().unwrap())?;
        term_value_with(term.kind, &patched, term.width)
    }

    /// Weighted sum of the term values; bounded above by the weight sum.
    pub fn total(&self, features: &FeatureRecord) -> Result<f64> {
        let mut sum = 0.0;
        for term in &self.terms {
            if term.weight == 0.0 {
                continue;
            }
            sum += term.weight * Self::eval_term(term, features)?;
        }
        Ok(sum)
    }

    /// Per-term weighted contributions in spec order.
    pub fn per_term(&self, features: &FeatureRecord) -> Result<Vec<(TermKind, f64)>> {
        self.terms
            .iter()
            .map(|term| {
                Ok((
                    term.kind,
                    if term.weight == 0.0 {
                        0.0
                    } else {
                        term.weight * Self::eval_term(term, features)?
                    },
                ))
            })
            .collect()
    }

    /// Full 14-term multimodal weighting (all terms, legged-robot ones
    /// included); exercised against synthetic records.
    pub fn multimodal_full() -> Self {
        RewardSpec {
            terms: vec![
                RewardTerm::weighted(TermKind::BasePose, 0.100),
                RewardTerm::weighted(TermKind::BaseHeight, 0.100),
                RewardTerm::weighted(TermKind::BaseVelocity, 0.071),
                RewardTerm::weighted(TermKind::TorqueRegularisation, 0.020),
                RewardTerm::weighted(TermKind::JointVelocityRegularisation, 0.020),
                RewardTerm::weighted(TermKind::FootGroundContact, 0.020),
                RewardTerm::weighted(TermKind::BodyGroundContact, 0.020),
                RewardTerm::weighted(TermKind::YawVelocity, 0.020),
                RewardTerm::weighted(TermKind::FootClearance, 0.036),
                RewardTerm::weighted(TermKind::JointReference, 0.167),
                RewardTerm::weighted(TermKind::FootContactReference, 0.033),
                RewardTerm::weighted(TermKind::FootPlacement, 0.036),
                RewardTerm::weighted(TermKind::Heading, 0.143),
                RewardTerm::weighted(TermKind::GoalPosition, 0.214),
            ],
        }
    }

    /// Trotting-column weights restricted to quantities the pendulum
    /// supplies; rhythmic-task analog.
    pub fn rhythmic_pendulum() -> Self {
        RewardSpec {
            terms: vec![
                RewardTerm::weighted(TermKind::BasePose, 0.071),
                RewardTerm::weighted(TermKind::BaseHeight, 0.036),
                RewardTerm::weighted(TermKind::BaseVelocity, 0.178),
                RewardTerm::weighted(TermKind::TorqueRegularisation, 0.018),
                RewardTerm::weighted(TermKind::JointVelocityRegularisation, 0.018),
                RewardTerm::weighted(TermKind::YawVelocity, 0.071),
                RewardTerm::weighted(TermKind::JointReference, 0.416),
            ],
        }
    }

    /// Fall-recovery-column weights restricted to pendulum quantities.
    pub fn recovery_pendulum() -> Self {
        RewardSpec {
            terms: vec![
                RewardTerm::weighted(TermKind::BasePose, 0.333),
                RewardTerm::weighted(TermKind::BaseHeight, 0.333),
                RewardTerm::weighted(TermKind::BaseVelocity, 0.067),
                RewardTerm::weighted(TermKind::TorqueRegularisation, 0.067),
                RewardTerm::weighted(TermKind::JointVelocityRegularisation, 0.067),
            ],
        }
    }

    /// Multimodal-column weights restricted to pendulum quantities.
    pub fn multimodal_pendulum() -> Self {
        RewardSpec {
            terms: vec![
                RewardTerm::weighted(TermKind::BasePose, 0.100),
                RewardTerm::weighted(TermKind::BaseHeight, 0.100),
                RewardTerm::weighted(TermKind::BaseVelocity, 0.071),
                RewardTerm::weighted(TermKind::TorqueRegularisation, 0.020),
                RewardTerm::weighted(TermKind::JointVelocityRegularisation, 0.020),
                RewardTerm::weighted(TermKind::YawVelocity, 0.020),
                RewardTerm::weighted(TermKind::JointReference, 0.167),
                RewardTerm::weighted(TermKind::Heading, 0.143),
                RewardTerm::weighted(TermKind::GoalPosition, 0.214),
            ],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full_record() -> FeatureRecord {
        FeatureRecord {
            orientation: Some(vec![0.1, 0.0, -0.9]),
            orientation_target: Some(vec![0.0, 0.0, -1.0]),
            height: Some(0.42),
            height_target: Some(0.47),
            velocity: Some(vec![0.2, -0.1]),
            velocity_target: Some(vec![0.25, 0.0]),
            yaw_rate: Some(0.3),
            joint_positions: Some(vec![0.1, -0.4]),
            joint_reference: Some(vec![0.15, -0.35]),
            joint_velocities: Some(vec![1.0, -2.0]),
            joint_torques: Some(vec![3.0, -1.0]),
            goal_heading: Some(vec![0.8, 0.0, 0.6]),
            goal_position: Some(vec![1.5, 0.5]),
            body_position: Some(vec![0.5, 0.2]),
            foot_heights: Some(vec![0.02, 0.0, 0.05, 0.0]),
            foot_height_targets: Some(vec![0.03, 0.0, 0.03, 0.0]),
            foot_velocities: Some(vec![[0.1, 0.0], [0.0, 0.0], [0.2, 0.1], [0.0, 0.0]]),
            foot_placements: Some(vec![[0.6, 0.3], [0.4, 0.1], [0.7, 0.2], [0.5, 0.25]]),
            foot_contacts: Some(vec![false, true, false, true]),
            foot_contacts_desired: Some(vec![false, true, false, true]),
            body_contact: Some(false),
            foot_clearance_target: Some(0.04),
        }
    }

    #[test]
    fn rbf_is_one_at_target() {
        for width in [WIDTH_POSE, WIDTH_HEIGHT, WIDTH_TORQUE_REG] {
            assert_eq!(rbf(&[1.2, -0.4], &[1.2, -0.4], width).unwrap(), 1.0);
        }
    }

    #[test]
    fn rbf_scalar_reference_value() {
        // exp(-2.35 * 1^2)
        let v = rbf_scalar(0.0, 1.0, -2.35).unwrap();
        assert!((v - (-2.35f64).exp()).abs() < 1e-15);
        assert!((v - 0.09536916221554961).abs() < 1e-16);
    }

    #[test]
    fn rbf_symmetric_in_arguments() {
        let a = rbf(&[0.3, 1.0], &[-0.2, 0.5], -7.47).unwrap();
        let b = rbf(&[-0.2, 0.5], &[0.3, 1.0], -7.47).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rbf_rejects_positive_width() {
        assert!(rbf(&[0.0], &[1.0], 0.1).is_err());
    }

    #[test]
    fn phase_vector_reference_points() {
        let clock = PhaseClock::new(0.6).unwrap();
        let v0 = clock.vector();
        assert!((v0[0] - 0.0).abs() < 1e-12 && (v0[1] - 1.0).abs() < 1e-12);

        let quarter = phase_vector(0.15, 0.6);
        assert!((quarter[0] - 1.0).abs() < 1e-12 && quarter[1].abs() < 1e-12);

        let a = phase_vector(0.37, 0.6);
        let b = phase_vector(0.37 + 0.6, 0.6);
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }

    #[test]
    fn phase_clock_rejects_bad_period() {
        assert!(PhaseClock::new(0.0).is_err());
        assert!(PhaseClock::new(-1.0).is_err());
    }

    #[test]
    fn body_contact_indicator() {
        let mut f = full_record();
        assert_eq!(term_value(TermKind::BodyGroundContact, &f).unwrap(), 1.0);
        f.body_contact = Some(true);
        assert_eq!(term_value(TermKind::BodyGroundContact, &f).unwrap(), 0.0);
    }

    #[test]
    fn pose_term_maxes_at_nominal_orientation() {
        let mut f = full_record();
        f.orientation = Some(vec![0.0, 0.0, -1.0]);
        assert_eq!(term_value(TermKind::BasePose, &f).unwrap(), 1.0);
    }

    #[test]
    fn swing_stance_ignores_velocity_at_nominal_height() {
        let mut f = full_record();
        f.foot_heights = Some(vec![0.03, 0.0, 0.03, 0.0]);
        f.foot_height_targets = Some(vec![0.03, 0.0, 0.03, 0.0]);
        f.foot_velocities = Some(vec![[5.0, 3.0], [2.0, -8.0], [1.0, 1.0], [0.3, 0.4]]);
        assert_eq!(term_value(TermKind::SwingAndStance, &f).unwrap(), 1.0);
    }

    #[test]
    fn missing_feature_is_named_in_error() {
        let f = FeatureRecord::default();
        let err = term_value(TermKind::BaseHeight, &f).unwrap_err().to_string();
        assert!(err.contains("BaseHeight") && err.contains("height"), "{err}");
    }

    #[test]
    fn full_multimodal_weights_sum_to_one() {
        let spec = RewardSpec::multimodal_full();
        assert!((spec.weight_sum() - 1.0).abs() < 5e-4);
    }

    #[test]
    fn total_at_maximum_equals_weight_sum() {
        // All terms at their maximum: targets met, regs at zero, contacts matched.
        let f = FeatureRecord {
            orientation: Some(vec![0.0, 0.0, -1.0]),
            orientation_target: Some(vec![0.0, 0.0, -1.0]),
            height: Some(0.47),
            height_target: Some(0.47),
            velocity: Some(vec![0.25, 0.0]),
            velocity_target: Some(vec![0.25, 0.0]),
            yaw_rate: Some(0.0),
            joint_positions: Some(vec![0.1, -0.4]),
            joint_reference: Some(vec![0.1, -0.4]),
            joint_velocities: Some(vec![0.0, 0.0]),
            joint_torques: Some(vec![0.0, 0.0]),
            goal_heading: Some(vec![1.0, 0.0, 0.0]),
            goal_position: Some(vec![0.5, 0.2]),
            body_position: Some(vec![0.5, 0.2]),
            foot_heights: Some(vec![0.04, 0.04, 0.04, 0.04]),
            foot_height_targets: Some(vec![0.04, 0.04, 0.04, 0.04]),
            foot_velocities: Some(vec![[0.0, 0.0]; 4]),
            foot_placements: Some(vec![[0.5, 0.2]; 4]),
            foot_contacts: Some(vec![true; 4]),
            foot_contacts_desired: Some(vec![true; 4]),
            body_contact: Some(false),
            foot_clearance_target: Some(0.04),
        };
        let spec = RewardSpec::multimodal_full();
        let total = spec.total(&f).unwrap();
        assert!((total - spec.weight_sum()).abs() < 1e-12);
    }

    #[test]
    fn zero_weights_give_zero_total() {
        let spec = RewardSpec::new(TermKind::ALL.iter().map(|&t| (t, 0.0)).collect()).unwrap();
        assert_eq!(spec.total(&full_record()).unwrap(), 0.0);
    }

    /// Independent spreadsheet-style evaluation of the full multimodal
    /// column on a hand-built record.
    #[test]
    fn total_matches_term_by_term_oracle() {
        let f = full_record();
        let spec = RewardSpec::multimodal_full();

        let e = |w: f64, d2: f64| (w * d2).exp();
        let pose = e(-2.35, 0.1f64.powi(2) + 0.1f64.powi(2));
        let height = e(-51.16, 0.05f64.powi(2));
        let vel = e(-18.42, 0.05f64.powi(2) + 0.1f64.powi(2));
        let torque = e(-0.003, 9.0 + 1.0);
        let joint_vel = e(-0.026, 1.0 + 4.0);
        let foot_contact = 1.0; // some foot in contact
        let body_contact = 1.0;
        let yaw = e(-7.47, 0.09);
        // Swing feet are feet 0 and 2, heights 0.02 and 0.05, mean 0.035.
        let clearance = e(-51.16, (0.035f64 - 0.04).powi(2));
        let joint_ref = e(-29.88, 0.05f64.powi(2) + 0.05f64.powi(2));
        let contact_ref = 1.0;
        // Mean placement: x 0.55, y 0.2125 vs base (0.5, 0.2).
        let placement = e(-18.42, 0.05f64.powi(2) + 0.0125f64.powi(2));
        let heading = e(-2.35, (0.8f64 - 1.0).powi(2) + 0.0 + 0.36);
        let goal = e(-0.74, 1.0 + 0.09);

        let expected = 0.100 * pose
            + 0.100 * height
            + 0.071 * vel
            + 0.020 * torque
            + 0.020 * joint_vel
            + 0.020 * foot_contact
            + 0.020 * body_contact
            + 0.020 * yaw
            + 0.036 * clearance
            + 0.167 * joint_ref
            + 0.033 * contact_ref
            + 0.036 * placement
            + 0.143 * heading
            + 0.214 * goal;
        let got = spec.total(&f).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn clearance_is_one_when_all_feet_planted() {
        let mut f = full_record();
        f.foot_contacts = Some(vec![true; 4]);
        assert_eq!(term_value(TermKind::FootClearance, &f).unwrap(), 1.0);
    }

    proptest! {
        #[test]
        fn rbf_bounded_and_monotone(
            x in proptest::collection::vec(-10.0f64..10.0, 3),
            target in proptest::collection::vec(-10.0f64..10.0, 3),
            widx in 0usize..6,
        ) {
            let widths = [WIDTH_POSE, WIDTH_HEIGHT, WIDTH_VELOCITY, WIDTH_TORQUE_REG, WIDTH_YAW_VEL, WIDTH_SWING_STANCE];
            let w = widths[widx];
            let v = rbf(&x, &target, w).unwrap();
            // (0, 1] mathematically; exp underflows to +0 beyond ~1e-323.
            let d2: f64 = x.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum();
            prop_assert!(v <= 1.0);
            if w * d2 > -700.0 {
                prop_assert!(v > 0.0);
            }
            // Moving x halfway toward the target never decreases the value.
            let closer: Vec<f64> = x.iter().zip(&target).map(|(a, b)| 0.5 * (a + b)).collect();
            let v2 = rbf(&closer, &target, w).unwrap();
            prop_assert!(v2 >= v);
        }

        #[test]
        fn phase_vector_unit_norm(t in 0.0f64..100.0, period in 0.05f64..10.0) {
            let v = phase_vector(t, period);
            prop_assert!(((v[0] * v[0] + v[1] * v[1]).sqrt() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn indicator_terms_binary(contacts in proptest::collection::vec(any::<bool>(), 4), body in any::<bool>()) {
            let mut f = full_record();
            f.foot_contacts = Some(contacts.clone());
            f.body_contact = Some(body);
            for t in [TermKind::FootGroundContact, TermKind::BodyGroundContact, TermKind::FootContactReference] {
                let v = term_value(t, &f).unwrap();
                prop_assert!(v == 0.0 || v == 1.0);
            }
        }
    }
}
