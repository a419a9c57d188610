//! Soft actor-critic with twin critics, target networks, auto-tuned
//! temperature, the torque-smoothing actor penalty, and the two-stage
//! multi-expert training protocol.

pub mod losses;
pub mod replay;
pub mod trainer;

pub use losses::{actor_update, critic_update, soft_update, temperature_update, Policy, SacNets};
pub use replay::{ReplayBuffer, Transition};
pub use trainer::{evaluate, run_stage1, run_stage2, EpisodeMetrics, EvalSummary, Stage1Output, Stage2Output, StepRecord};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Which policy synthesis the trainer learns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Single,
    Mela,
    Moe,
}

impl Arch {
    pub fn name(&self) -> &'static str {
        match self {
            Arch::Single => "single",
            Arch::Mela => "mela",
            Arch::Moe => "moe",
        }
    }

    pub fn from_name(s: &str) -> Result<Arch> {
        match s {
            "single" => Ok(Arch::Single),
            "mela" => Ok(Arch::Mela),
            "moe" => Ok(Arch::Moe),
            other => Err(Error::Config(format!("unknown architecture `{other}`"))),
        }
    }
}

/// Every training knob. Defaults carry the published hyperparameters;
/// desk-scale runs override the budget fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Coefficient of the smoothing loss inside the actor objective.
    pub smoothing_coeff: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub discount: f64,
    /// Soft target update rate.
    pub target_update_tau: f64,
    /// Metrics epoch length in environment steps.
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub gradient_steps_per_env_step: usize,
    /// Entropy target; `None` resolves to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub replay_capacity: usize,
    /// Random-action steps before learning starts.
    pub warmup_steps: usize,
    /// Policy steps each random warmup reference is held for; sustained
    /// references explore maneuvers a per-step resample never reaches.
    pub warmup_action_hold_steps: usize,
    /// Half-range of the random warmup reference offset from the measured
    /// pose, radians.
    pub warmup_action_scale_rad: f64,
    pub episodes: usize,
    /// Policy steps per episode (25 Hz).
    pub episode_len_steps: usize,
    pub num_experts: usize,
    pub expert_hidden: usize,
    pub gating_hidden: usize,
    pub critic_hidden: usize,
    pub init_temperature: f64,
    pub eval_interval_episodes: usize,
    pub eval_episodes: usize,
    pub rollout_workers: usize,
    // Action pipeline.
    pub filter_cutoff_hz: f64,
    pub eval_filter_cutoff_hz: f64,
    pub policy_rate_hz: f64,
    pub control_rate_hz: f64,
    pub speed_limit_rad_s: f64,
    pub impedance_kp: f64,
    pub impedance_kd: f64,
    /// Reward specification override; `None` uses the task's own column.
    pub reward: Option<crate::reward::RewardSpec>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            smoothing_coeff: 2.0,
            learning_rate: 3e-4,
            weight_decay: 1e-6,
            discount: 0.987,
            target_update_tau: 0.001,
            steps_per_epoch: 5000,
            batch_size: 256,
            gradient_steps_per_env_step: 1,
            target_entropy: None,
            replay_capacity: 1_000_000,
            warmup_steps: 1000,
            warmup_action_hold_steps: 25,
            warmup_action_scale_rad: 1.2,
            episodes: 200,
            episode_len_steps: 500,
            num_experts: 8,
            expert_hidden: crate::nets::EXPERT_HIDDEN_DEFAULT,
            gating_hidden: crate::nets::GATING_HIDDEN_DEFAULT,
            critic_hidden: crate::nets::CRITIC_HIDDEN_DEFAULT,
            init_temperature: 0.2,
            eval_interval_episodes: 10,
            eval_episodes: 5,
            rollout_workers: 1,
            filter_cutoff_hz: 5.0,
            eval_filter_cutoff_hz: 3.0,
            policy_rate_hz: 25.0,
            control_rate_hz: 1000.0,
            speed_limit_rad_s: 8.0,
            impedance_kp: crate::env::PENDULUM_KP,
            impedance_kd: crate::env::PENDULUM_KD,
            reward: None,
        }
    }
}

impl TrainConfig {
    /// Desk-scale budget: smaller nets, shorter replay, fewer episodes.
    pub fn desk_scale() -> Self {
        TrainConfig {
            replay_capacity: 200_000,
            batch_size: 128,
            expert_hidden: 48,
            gating_hidden: 32,
            critic_hidden: 64,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount {} outside (0,1)", self.discount)));
        }
        if !(self.target_update_tau > 0.0 && self.target_update_tau <= 1.0) {
            return Err(Error::Config(format!(
                "target update tau {} outside (0,1]",
                self.target_update_tau
            )));
        }
        if self.smoothing_coeff < 0.0 {
            return Err(Error::Config("smoothing coefficient must be >= 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return Err(Error::Config("batch size and replay capacity must be > 0".into()));
        }
        if self.num_experts < 2 || self.num_experts % 2 != 0 {
            return Err(Error::Config(format!(
                "expert count must be even and >= 2, got {}",
                self.num_experts
            )));
        }
        if self.rollout_workers == 0 {
            return Err(Error::Config("rollout workers must be >= 1".into()));
        }
        if self.init_temperature <= 0.0 {
            return Err(Error::Config("initial temperature must be > 0".into()));
        }
        let substeps = self.control_rate_hz / self.policy_rate_hz;
        if substeps.fract().abs() > 1e-9 || substeps < 1.0 {
            return Err(Error::Config(
                "control rate must be an integer multiple of the policy rate".into(),
            ));
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.control_rate_hz / self.policy_rate_hz).round() as usize
    }

    pub fn policy_dt(&self) -> f64 {
        1.0 / self.policy_rate_hz
    }

    pub fn resolved_target_entropy(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }

    pub fn reward_spec(&self, task: crate::env::Task) -> crate::reward::RewardSpec {
        self.reward.clone().unwrap_or_else(|| task.reward_spec())
    }
}

/// SAC temperature stored as its logarithm so it stays positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature {
    log_alpha: f64,
}

impl Temperature {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::contract("Temperature::new", "temperature must be > 0"));
        }
        Ok(Temperature {
            log_alpha: alpha.ln(),
        })
    }

    pub fn from_log(log_alpha: f64) -> Self {
        Temperature { log_alpha }
    }

    pub fn value(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_value(&self) -> f64 {
        self.log_alpha
    }
}
