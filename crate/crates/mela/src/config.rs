//! Flat key=value run configuration. A config file (UTF-8, `key = value`
//! per line, `#` comments) seeds the values, command-line overrides win,
//! unknown keys are rejected, and the effective snapshot is canonical
//! (sorted) so its hash identifies the run.

use crate::env::Task;
use crate::error::{Error, Result};
use crate::reward::TermKind;
use crate::sac::{Arch, TrainConfig};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Keys with fixed names; everything else must match `reward.<term>.<field>`.
#[cfg(test)]
const KNOWN_KEYS: &[&str] = &[
    "seed",
    "task",
    "arch",
    "smoothing_coeff",
    "learning_rate",
    "weight_decay",
    "discount",
    "target_update_tau",
    "steps_per_epoch",
    "batch_size",
    "gradient_steps_per_env_step",
    "target_entropy",
    "replay_capacity",
    "warmup_steps",
    "warmup_action_hold_steps",
    "warmup_action_scale_rad",
    "episodes",
    "episode_len_steps",
    "num_experts",
    "expert_hidden",
    "gating_hidden",
    "critic_hidden",
    "init_temperature",
    "eval_interval_episodes",
    "eval_episodes",
    "rollout_workers",
    "filter_cutoff_hz",
    "eval_filter_cutoff_hz",
    "policy_rate_hz",
    "control_rate_hz",
    "speed_limit_rad_s",
    "impedance_kp",
    "impedance_kd",
];

/// Effective configuration of one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub task: Task,
    pub arch: Arch,
    pub train: TrainConfig,
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::desk_scale();
        let mut cfg = RunConfig {
            seed: 0,
            task: Task::Recovery,
            arch: Arch::Single,
            train,
            values: BTreeMap::new(),
        };
        cfg.values = cfg.materialize();
        cfg
    }
}

impl RunConfig {
    /// Load from an optional file, then apply `key=value` overrides in
    /// order. Later values win.
    pub fn from_sources(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    Error::Config(format!("{}:{}: expected key = value", path.display(), lineno + 1))
                })?;
                cfg.set(k.trim(), v.trim())?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Apply one key. Rejects unknown keys and unparseable values.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_inner(key, value)?;
        self.values = self.materialize();
        Ok(())
    }

    fn set_inner(&mut self, key: &str, value: &str) -> Result<()> {
        let parse_f64 = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
        };
        let parse_usize = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer")))
        };
        let t = &mut self.train;
        match key {
            "seed" => {
                self.seed = value
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("key `seed`: `{value}` is not an integer")))?
            }
            "task" => self.task = Task::from_name(value)?,
            "arch" => self.arch = Arch::from_name(value)?,
            "smoothing_coeff" => t.smoothing_coeff = parse_f64(value)?,
            "learning_rate" => t.learning_rate = parse_f64(value)?,
            "weight_decay" => t.weight_decay = parse_f64(value)?,
            "discount" => t.discount = parse_f64(value)?,
            "target_update_tau" => t.target_update_tau = parse_f64(value)?,
            "steps_per_epoch" => t.steps_per_epoch = parse_usize(value)?,
            "batch_size" => t.batch_size = parse_usize(value)?,
            "gradient_steps_per_env_step" => t.gradient_steps_per_env_step = parse_usize(value)?,
            "target_entropy" => {
                t.target_entropy = if value == "auto" {
                    None
                } else {
                    Some(parse_f64(value)?)
                }
            }
            "replay_capacity" => t.replay_capacity = parse_usize(value)?,
            "warmup_steps" => t.warmup_steps = parse_usize(value)?,
            "warmup_action_hold_steps" => t.warmup_action_hold_steps = parse_usize(value)?,
            "warmup_action_scale_rad" => t.warmup_action_scale_rad = parse_f64(value)?,
            "episodes" => t.episodes = parse_usize(value)?,
            "episode_len_steps" => t.episode_len_steps = parse_usize(value)?,
            "num_experts" => t.num_experts = parse_usize(value)?,
            "expert_hidden" => t.expert_hidden = parse_usize(value)?,
            "gating_hidden" => t.gating_hidden = parse_usize(value)?,
            "critic_hidden" => t.critic_hidden = parse_usize(value)?,
            "init_temperature" => t.init_temperature = parse_f64(value)?,
            "eval_interval_episodes" => t.eval_interval_episodes = parse_usize(value)?,
            "eval_episodes" => t.eval_episodes = parse_usize(value)?,
            "rollout_workers" => t.rollout_workers = parse_usize(value)?,
            "filter_cutoff_hz" => t.filter_cutoff_hz = parse_f64(value)?,
            "eval_filter_cutoff_hz" => t.eval_filter_cutoff_hz = parse_f64(value)?,
            "policy_rate_hz" => t.policy_rate_hz = parse_f64(value)?,
            "control_rate_hz" => t.control_rate_hz = parse_f64(value)?,
            "speed_limit_rad_s" => t.speed_limit_rad_s = parse_f64(value)?,
            "impedance_kp" => t.impedance_kp = parse_f64(value)?,
            "impedance_kd" => t.impedance_kd = parse_f64(value)?,
            reward_key if reward_key.starts_with("reward.") => {
                self.set_reward_key(reward_key, value)?
            }
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    fn set_reward_key(&mut self, key: &str, value: &str) -> Result<()> {
        let mut parts = key.splitn(3, '.');
        let _ = parts.next();
        let term_name = parts
            .next()
            .ok_or_else(|| Error::Config(format!("malformed reward key `{key}`")))?;
        let field = parts
            .next()
            .ok_or_else(|| Error::Config(format!("malformed reward key `{key}`")))?;
        let term = TermKind::from_name(term_name)
            .ok_or_else(|| Error::Config(format!("unknown reward term `{term_name}`")))?;
        let spec = self
            .train
            .reward
            .get_or_insert_with(|| self.task.reward_spec());
        let entry = spec.term_mut(term);
        match field {
            "weight" => {
                entry.weight = value
                    .parse::<f64>()
                    .map_err(|_| Error::Config(format!("key `{key}`: bad number `{value}`")))?
            }
            "width" => {
                entry.width = Some(value.parse::<f64>().map_err(|_| {
                    Error::Config(format!("key `{key}`: bad number `{value}`"))
                })?)
            }
            "target" => {
                let vals = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<f64>, _>>()
                    .map_err(|_| Error::Config(format!("key `{key}`: bad vector `{value}`")))?;
                entry.target = Some(vals);
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown reward field `{other}` (weight, width, target)"
                )))
            }
        }
        Ok(())
    }

    /// Full effective key set, defaults included.
    fn materialize(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        let fmt = |v: f64| format!("{v}");
        let mut m = BTreeMap::new();
        m.insert("seed".into(), self.seed.to_string());
        m.insert("task".into(), self.task.name().to_string());
        m.insert("arch".into(), self.arch.name().to_string());
        m.insert("smoothing_coeff".into(), fmt(t.smoothing_coeff));
        m.insert("learning_rate".into(), fmt(t.learning_rate));
        m.insert("weight_decay".into(), fmt(t.weight_decay));
        m.insert("discount".into(), fmt(t.discount));
        m.insert("target_update_tau".into(), fmt(t.target_update_tau));
        m.insert("steps_per_epoch".into(), t.steps_per_epoch.to_string());
        m.insert("batch_size".into(), t.batch_size.to_string());
        m.insert(
            "gradient_steps_per_env_step".into(),
            t.gradient_steps_per_env_step.to_string(),
        );
        m.insert(
            "target_entropy".into(),
            t.target_entropy.map_or("auto".to_string(), |v| format!("{v}")),
        );
        m.insert("replay_capacity".into(), t.replay_capacity.to_string());
        m.insert("warmup_steps".into(), t.warmup_steps.to_string());
        m.insert(
            "warmup_action_hold_steps".into(),
            t.warmup_action_hold_steps.to_string(),
        );
        m.insert(
            "warmup_action_scale_rad".into(),
            fmt(t.warmup_action_scale_rad),
        );
        m.insert("episodes".into(), t.episodes.to_string());
        m.insert("episode_len_steps".into(), t.episode_len_steps.to_string());
        m.insert("num_experts".into(), t.num_experts.to_string());
        m.insert("expert_hidden".into(), t.expert_hidden.to_string());
        m.insert("gating_hidden".into(), t.gating_hidden.to_string());
        m.insert("critic_hidden".into(), t.critic_hidden.to_string());
        m.insert("init_temperature".into(), fmt(t.init_temperature));
        m.insert(
            "eval_interval_episodes".into(),
            t.eval_interval_episodes.to_string(),
        );
        m.insert("eval_episodes".into(), t.eval_episodes.to_string());
        m.insert("rollout_workers".into(), t.rollout_workers.to_string());
        m.insert("filter_cutoff_hz".into(), fmt(t.filter_cutoff_hz));
        m.insert("eval_filter_cutoff_hz".into(), fmt(t.eval_filter_cutoff_hz));
        m.insert("policy_rate_hz".into(), fmt(t.policy_rate_hz));
        m.insert("control_rate_hz".into(), fmt(t.control_rate_hz));
        m.insert("speed_limit_rad_s".into(), fmt(t.speed_limit_rad_s));
        m.insert("impedance_kp".into(), fmt(t.impedance_kp));
        m.insert("impedance_kd".into(), fmt(t.impedance_kd));
        if let Some(spec) = &t.reward {
            for term in &spec.terms {
                let base = format!("reward.{}", term.kind.name());
                m.insert(format!("{base}.weight"), fmt(term.weight));
                if let Some(w) = term.width {
                    m.insert(format!("{base}.width"), fmt(w));
                }
                if let Some(tg) = &term.target {
                    m.insert(
                        format!("{base}.target"),
                        tg.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(","),
                    );
                }
            }
        }
        m
    }

    /// Canonical sorted `key = value` snapshot. Replaying this file alone
    /// reproduces the run.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.materialize() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.snapshot().as_bytes());
        hasher.finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        self.hash().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_snapshot_round_trips_through_a_file() {
        let cfg = RunConfig::default();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, cfg.snapshot()).unwrap();
        let loaded = RunConfig::from_sources(Some(&path), &[]).unwrap();
        assert_eq!(cfg.snapshot(), loaded.snapshot());
        assert_eq!(cfg.hash(), loaded.hash());
    }

    #[test]
    fn overrides_win_over_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "episodes = 10\nseed = 3\n").unwrap();
        let cfg = RunConfig::from_sources(
            Some(&path),
            &[("episodes".to_string(), "20".to_string())],
        )
        .unwrap();
        assert_eq!(cfg.train.episodes, 20);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_sources(None, &[("bogus".to_string(), "1".to_string())]);
        assert!(err.is_err());
        let err = RunConfig::from_sources(None, &[("reward.bogus.weight".into(), "1".into())]);
        assert!(err.is_err());
    }

    #[test]
    fn every_known_key_is_settable() {
        let mut cfg = RunConfig::default();
        for key in KNOWN_KEYS {
            let value = cfg.values.get(*key).cloned().unwrap();
            cfg.set(key, &value).unwrap();
        }
    }

    #[test]
    fn reward_keys_build_an_override_spec() {
        let cfg = RunConfig::from_sources(
            None,
            &[
                ("task".to_string(), "rhythmic".to_string()),
                ("reward.base_pose.weight".to_string(), "0.5".to_string()),
                ("reward.base_height.target".to_string(), "0.25".to_string()),
                ("reward.base_velocity.width".to_string(), "-3.0".to_string()),
            ],
        )
        .unwrap();
        let spec = cfg.train.reward.as_ref().unwrap();
        let pose = spec.terms.iter().find(|t| t.kind == TermKind::BasePose).unwrap();
        assert_eq!(pose.weight, 0.5);
        let h = spec.terms.iter().find(|t| t.kind == TermKind::BaseHeight).unwrap();
        assert_eq!(h.target.as_deref(), Some(&[0.25][..]));
        let v = spec.terms.iter().find(|t| t.kind == TermKind::BaseVelocity).unwrap();
        assert_eq!(v.width, Some(-3.0));
        // Reward keys survive the snapshot round trip.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, cfg.snapshot()).unwrap();
        let loaded = RunConfig::from_sources(Some(&path), &[]).unwrap();
        assert_eq!(cfg.snapshot(), loaded.snapshot());
    }

    #[test]
    fn hash_changes_with_any_value() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.set("seed", "99").unwrap();
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn malformed_lines_are_rejected_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cfg");
        std::fs::write(&path, "episodes 10\n").unwrap();
        let err = RunConfig::from_sources(Some(&path), &[]).unwrap_err().to_string();
        assert!(err.contains(":1:"), "{err}");
    }
}
