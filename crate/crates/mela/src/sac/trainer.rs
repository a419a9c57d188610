//! Training loops: rollout through the action pipeline at the policy rate,
//! gradient updates per environment step, periodic deterministic
//! evaluation, and the two-stage multi-expert protocol.

use crate::env::{
    self, mode_label, observe, observe_full, reset, terminate, tip_position, EnvParams, EnvState,
    InitCatalogue, ModeLabel, NetInput, ObsLayout, Task, TerminationReason, ACTION_DIM,
};
use crate::error::{Error, Result};
use crate::fusion::{init_stage2, ExpertBank};
use crate::nets::{mean_action, sample_squashed, ActionBound, MlpSpec, ParamSet};
use crate::pipeline::{impedance_torque, interpolate_and_limit, ImpedanceGains, LowPassFilter, RateLimiter};
use crate::reward::TermKind;
use crate::sac::losses::{actor_update, critic_update, soft_update, temperature_update, Optimizers, Policy, SacNets};
use crate::sac::{Arch, ReplayBuffer, Temperature, TrainConfig, Transition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Mutex};

/// Consecutive policy steps the upright band must hold to count as a
/// recovery success (1 s at 25 Hz).
pub const SUCCESS_HOLD_STEPS: usize = 25;

/// Whether a termination cuts the value bootstrap. Running out of episode
/// time is a property of sample collection, not of the state, so targets
/// bootstrap through it; state failures do not.
fn cuts_bootstrap(reason: Option<TerminationReason>) -> bool {
    matches!(
        reason,
        Some(TerminationReason::Runaway) | Some(TerminationReason::Orientation)
    )
}

/// Per-episode training record, one JSONL row per episode.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub env_steps: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: usize,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub smoothing_term: f64,
    pub alpha_t: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_alpha: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval_return: Option<f64>,
}

/// Joint-reference bound for the pendulum: full revolute range per joint.
pub fn pendulum_bound() -> ActionBound {
    ActionBound::symmetric(vec![PI, PI]).expect("positive half-range")
}

/// Which observation vector feeds a policy, from its input width.
fn policy_net_input(policy: &Policy) -> Result<NetInput> {
    match policy {
        Policy::Single(p) => match p.spec().input {
            env::OBS_DIM_RECOVERY => Ok(NetInput::Stage1Recovery),
            env::OBS_DIM_RHYTHMIC => Ok(NetInput::Stage1Rhythmic),
            other => Err(Error::contract(
                "policy_net_input",
                format!("no observation layout of width {other}"),
            )),
        },
        Policy::Fused(_) | Policy::Blended(_) => Ok(NetInput::Synthesized),
    }
}

/// Filtered, rate-limited, impedance-tracked execution of one policy-rate
/// reference over the control-rate substeps.
struct ActionPipeline {
    filter: LowPassFilter,
    limiter: RateLimiter,
    gains: ImpedanceGains,
    substeps: usize,
    last_ref: [f64; 2],
}

impl ActionPipeline {
    fn new(cfg: &TrainConfig, eval_mode: bool) -> Result<Self> {
        let cutoff = if eval_mode {
            cfg.eval_filter_cutoff_hz
        } else {
            cfg.filter_cutoff_hz
        };
        Ok(ActionPipeline {
            filter: LowPassFilter::new(cutoff, cfg.policy_dt(), ACTION_DIM)?,
            limiter: RateLimiter::new(cfg.speed_limit_rad_s)?,
            gains: ImpedanceGains::uniform(cfg.impedance_kp, cfg.impedance_kd, ACTION_DIM)?,
            substeps: cfg.substeps(),
            last_ref: [0.0; 2],
        })
    }

    fn reset(&mut self, state: &EnvState) {
        self.filter.reset();
        self.last_ref = state.q;
    }

    /// Returns the next policy-rate state and the mean applied torque.
    fn apply(&mut self, params: &EnvParams, state: &EnvState, action_ref: &[f64]) -> Result<(EnvState, [f64; 2])> {
        let filtered = self.filter.step(action_ref)?;
        // Re-branch both endpoints around the measured joints so revolute
        // wrap-around never produces a full-circle reference excursion.
        let start: Vec<f64> = (0..2)
            .map(|j| state.q[j] + env::angle_diff(self.last_ref[j], state.q[j]))
            .collect();
        let target: Vec<f64> = (0..2)
            .map(|j| state.q[j] + env::angle_diff(filtered[j], state.q[j]))
            .collect();
        let refs = interpolate_and_limit(&start, &target, self.substeps, params.dt, self.limiter)?;

        let mut s = state.clone();
        let mut tau_sum = [0.0f64; 2];
        for r in &refs {
            // Keep the tracking error in the measured branch per substep.
            let r_eff: Vec<f64> = (0..2).map(|j| s.q[j] + env::angle_diff(r[j], s.q[j])).collect();
            let tau = impedance_torque(&r_eff, &s.q, &s.qd, &self.gains, params.torque_limit)?;
            tau_sum[0] += tau[0];
            tau_sum[1] += tau[1];
            s = env::step(params, &s, &tau)?;
        }
        self.last_ref = [
            env::wrap_angle(refs[self.substeps - 1][0]),
            env::wrap_angle(refs[self.substeps - 1][1]),
        ];
        let n = self.substeps as f64;
        Ok((s, [tau_sum[0] / n, tau_sum[1] / n]))
    }
}

fn policy_action(
    policy: &Policy,
    params: &EnvParams,
    state: &EnvState,
    bound: &ActionBound,
    rng: Option<&mut ChaCha12Rng>,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let net = policy_net_input(policy)?;
    let pobs = observe(params, state, net)?;
    let gobs = match policy {
        Policy::Single(_) => None,
        _ => Some(observe(params, state, NetInput::Gating)?),
    };
    let (out, alpha) = policy.head(gobs.as_deref(), &pobs)?;
    let action = match rng {
        Some(r) => sample_squashed(&out, bound, r).0,
        None => mean_action(&out, bound),
    };
    Ok((action, alpha))
}

// ── evaluation ──────────────────────────────────────────────────────────

/// One evaluation step row (25 Hz), feeding trajectory CSVs and
/// activation logs.
#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub episode: usize,
    pub step: usize,
    pub t: f64,
    pub q: [f64; 2],
    pub qd: [f64; 2],
    pub tau: [f64; 2],
    pub action: Vec<f64>,
    pub reward: f64,
    pub terms: Vec<(TermKind, f64)>,
    pub mode: Option<ModeLabel>,
    pub alpha: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub steps: usize,
    pub success: bool,
    pub mode_transitions: usize,
    pub termination: Option<TerminationReason>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: Vec<EvalEpisode>,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Mean per-step L2 gap between the commanded reference and the
    /// measured joints.
    pub mean_reference_gap: f64,
}

/// Deterministic-policy evaluation: mean action, eval filter cutoff,
/// seeded resets. Optionally collects per-step records.
pub fn evaluate(
    policy: &Policy,
    task: Task,
    cfg: &TrainConfig,
    episodes: usize,
    seed: u64,
    collect_steps: bool,
) -> Result<(EvalSummary, Vec<StepRecord>)> {
    let params = EnvParams::default();
    let catalogue = InitCatalogue::default();
    let bound = pendulum_bound();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let time_limit = cfg.episode_len_steps as f64 * cfg.policy_dt();

    let reward_spec = cfg.reward_spec(task);
    let mut out = EvalSummary {
        episodes: Vec::with_capacity(episodes),
        mean_return: 0.0,
        success_rate: 0.0,
        mean_reference_gap: 0.0,
    };
    let mut records = Vec::new();
    let mut gap_sum = 0.0;
    let mut gap_steps = 0usize;

    for ep in 0..episodes {
        let mut pipeline = ActionPipeline::new(cfg, true)?;
        let mut state = reset(task, &catalogue, &mut rng)?;
        pipeline.reset(&state);
        let mut ret = 0.0;
        let mut steps = 0usize;
        let mut hold = 0usize;
        let mut success = false;
        let mut transitions = 0usize;
        let mut last_mode: Option<ModeLabel> = None;
        let mut goal_reached = task != Task::Multimodal;
        let mut termination = None;

        for step_idx in 0..cfg.episode_len_steps {
            let (action, alpha) = policy_action(policy, &params, &state, &bound, None)?;
            let (next, tau) = pipeline.apply(&params, &state, &action)?;
            let r = reward_spec.total(&env::features(&params, &next, &tau, task))?;
            ret += r;
            steps += 1;

            gap_sum += {
                let d0 = action[0] - state.q[0];
                let d1 = action[1] - state.q[1];
                (d0 * d0 + d1 * d1).sqrt()
            };
            gap_steps += 1;

            if env::in_upright_band(&next) {
                hold += 1;
                if hold >= SUCCESS_HOLD_STEPS {
                    success = true;
                }
            } else {
                hold = 0;
            }
            if task == Task::Multimodal {
                if let Some(goal) = next.goal {
                    let tip = tip_position(&params, &next);
                    let d = ((goal[0] - tip[0]).powi(2) + (goal[1] - tip[1]).powi(2)).sqrt();
                    if d < env::GOAL_NEAR_DISTANCE {
                        goal_reached = true;
                    }
                }
                let mode = mode_label(&params, &next);
                if let Some(prev) = last_mode {
                    if prev != mode {
                        transitions += 1;
                    }
                }
                last_mode = Some(mode);
            }
            if collect_steps {
                let f = env::features(&params, &next, &tau, task);
                records.push(StepRecord {
                    episode: ep,
                    step: step_idx,
                    t: next.t,
                    q: next.q,
                    qd: next.qd,
                    tau,
                    action: action.clone(),
                    reward: r,
                    terms: reward_spec.per_term(&f)?,
                    mode: (task == Task::Multimodal).then(|| mode_label(&params, &next)),
                    alpha: alpha.clone(),
                });
            }
            state = next;
            if let Some(reason) = terminate(&state, task, time_limit) {
                termination = Some(reason);
                break;
            }
        }

        let success = match task {
            Task::Recovery => success,
            Task::Rhythmic => termination == Some(TerminationReason::Timeout) || termination.is_none(),
            Task::Multimodal => success && goal_reached,
        };
        out.episodes.push(EvalEpisode {
            episode: ep,
            ret,
            steps,
            success,
            mode_transitions: transitions,
            termination,
        });
    }

    let n = episodes.max(1) as f64;
    out.mean_return = out.episodes.iter().map(|e| e.ret).sum::<f64>() / n;
    out.success_rate = out.episodes.iter().filter(|e| e.success).count() as f64 / n;
    out.mean_reference_gap = if gap_steps > 0 {
        gap_sum / gap_steps as f64
    } else {
        0.0
    };
    Ok((out, records))
}

// ── training loop ───────────────────────────────────────────────────────

struct TrainLoop<'a> {
    cfg: &'a TrainConfig,
    task: Task,
    reward_spec: crate::reward::RewardSpec,
    layout: ObsLayout,
    bound: ActionBound,
    params: EnvParams,
    catalogue: InitCatalogue,
    nets: SacNets,
    opts: Optimizers,
    replay: ReplayBuffer,
    rng: ChaCha12Rng,
    seed: u64,
    env_steps: usize,
    metrics: Vec<EpisodeMetrics>,
    best: Option<(f64, Policy)>,
}

impl<'a> TrainLoop<'a> {
    fn new(cfg: &'a TrainConfig, task: Task, nets: SacNets, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let opts = Optimizers::new(&nets, cfg)?;
        Ok(TrainLoop {
            cfg,
            task,
            reward_spec: cfg.reward_spec(task),
            layout: ObsLayout::for_task(task),
            bound: pendulum_bound(),
            params: EnvParams::default(),
            catalogue: InitCatalogue::default(),
            nets,
            opts,
            replay: ReplayBuffer::new(cfg.replay_capacity)?,
            rng: ChaCha12Rng::seed_from_u64(seed),
            seed,
            env_steps: 0,
            metrics: Vec::new(),
            best: None,
        })
    }

    /// Warmup exploration: a reference offset from the measured pose,
    /// held for several steps. Relative offsets keep locomotion-type
    /// episodes alive while random-walking the arm across configurations.
    fn random_action(&mut self, state: &EnvState, held: &mut Option<(Vec<f64>, usize)>) -> Vec<f64> {
        if let Some((action, left)) = held {
            if *left > 0 {
                *left -= 1;
                return action.clone();
            }
        }
        let action: Vec<f64> = (0..ACTION_DIM)
            .map(|j| {
                let scale = self.cfg.warmup_action_scale_rad;
                let target = state.q[j] + self.rng.gen_range(-scale..scale);
                let (lo, hi) = (
                    self.bound.mid(j) - self.bound.half(j),
                    self.bound.mid(j) + self.bound.half(j),
                );
                target.clamp(lo + 1e-9, hi - 1e-9)
            })
            .collect();
        *held = Some((action.clone(), self.cfg.warmup_action_hold_steps.saturating_sub(1)));
        action
    }

    fn maybe_update(&mut self, stats: &mut UpdateStats) -> Result<()> {
        if self.env_steps < self.cfg.warmup_steps || self.replay.len() < self.cfg.batch_size {
            return Ok(());
        }
        let target_entropy = self.cfg.resolved_target_entropy(ACTION_DIM);
        for _ in 0..self.cfg.gradient_steps_per_env_step {
            let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng)?;
            let (c1, c2) = critic_update(
                &mut self.nets,
                &mut self.opts,
                &batch,
                &self.layout,
                &self.bound,
                self.cfg,
                &mut self.rng,
            )?;
            let astats = actor_update(
                &mut self.nets,
                &mut self.opts,
                &batch,
                &self.layout,
                &self.bound,
                self.cfg,
                &mut self.rng,
            )?;
            temperature_update(
                &mut self.nets.temperature,
                &mut self.opts.temperature,
                astats.mean_log_prob,
                target_entropy,
            )?;
            soft_update(&mut self.nets.target1, &self.nets.critic1, self.cfg.target_update_tau)?;
            soft_update(&mut self.nets.target2, &self.nets.critic2, self.cfg.target_update_tau)?;
            stats.push(c1, c2, &astats);
        }
        Ok(())
    }

    /// Inline single-worker episode. Returns (return, steps).
    fn run_episode(&mut self, stats: &mut UpdateStats) -> Result<(f64, usize)> {
        let mut pipeline = ActionPipeline::new(self.cfg, false)?;
        let mut state = reset(self.task, &self.catalogue, &mut self.rng)?;
        pipeline.reset(&state);
        let time_limit = self.cfg.episode_len_steps as f64 * self.cfg.policy_dt();
        let mut ret = 0.0;
        let mut steps = 0usize;
        let mut held: Option<(Vec<f64>, usize)> = None;
        for _ in 0..self.cfg.episode_len_steps {
            let action = if self.env_steps < self.cfg.warmup_steps {
                self.random_action(&state, &mut held)
            } else {
                policy_action(&self.nets.policy, &self.params, &state, &self.bound, Some(&mut self.rng))?.0
            };
            let full = observe_full(&self.params, &state, self.task)?;
            let (next, tau) = pipeline.apply(&self.params, &state, &action)?;
            let r = self.reward_spec.total(&env::features(&self.params, &next, &tau, self.task))?;
            let done = terminate(&next, self.task, time_limit);
            self.replay.push(Transition {
                state: full,
                action: action.clone(),
                reward: r,
                next_state: observe_full(&self.params, &next, self.task)?,
                done: cuts_bootstrap(done),
            });
            ret += r;
            steps += 1;
            self.env_steps += 1;
            state = next;
            self.maybe_update(stats)?;
            if done.is_some() {
                break;
            }
        }
        Ok((ret, steps))
    }

    fn eval_seed(&self, round: usize) -> u64 {
        self.seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(round as u64 + 1)
    }

    fn train(&mut self) -> Result<()> {
        if self.cfg.rollout_workers > 1 {
            return self.train_with_workers();
        }
        for episode in 0..self.cfg.episodes {
            let mut stats = UpdateStats::default();
            let (ret, steps) = self.run_episode(&mut stats)?;
            let eval_return = if (episode + 1) % self.cfg.eval_interval_episodes == 0 {
                let (summary, _) = evaluate(
                    &self.nets.policy,
                    self.task,
                    self.cfg,
                    self.cfg.eval_episodes,
                    self.eval_seed(episode),
                    false,
                )?;
                let better = self.best.as_ref().map_or(true, |(b, _)| summary.mean_return > *b);
                if better {
                    self.best = Some((summary.mean_return, self.nets.policy.clone()));
                }
                Some(summary.mean_return)
            } else {
                None
            };
            self.metrics.push(EpisodeMetrics {
                episode,
                env_steps: self.env_steps,
                ret,
                steps,
                critic_loss: stats.critic_mean(),
                actor_loss: stats.actor_mean(),
                smoothing_term: stats.smoothing_mean(),
                alpha_t: self.nets.temperature.value(),
                mean_alpha: stats.alpha_mean(),
                eval_return,
            });
        }
        Ok(())
    }

    /// K rollout workers feed transitions over a channel to this trainer
    /// thread, which owns the networks and the buffer. Workers refresh
    /// their policy snapshot at every episode boundary.
    fn train_with_workers(&mut self) -> Result<()> {
        #[allow(clippy::large_enum_variant)]
        enum Msg {
            Step(Transition),
            Episode { ret: f64, steps: usize },
        }
        let workers = self.cfg.rollout_workers;
        let shared: Arc<Mutex<Policy>> = Arc::new(Mutex::new(self.nets.policy.clone()));
        let stop = Arc::new(AtomicBool::new(false));
        let episodes_started = Arc::new(AtomicUsize::new(0));
        let (tx, rx) = mpsc::channel::<Msg>();

        std::thread::scope(|scope| -> Result<()> {
            for w in 0..workers {
                let tx = tx.clone();
                let shared = Arc::clone(&shared);
                let stop = Arc::clone(&stop);
                let episodes_started = Arc::clone(&episodes_started);
                let cfg = self.cfg;
                let task = self.task;
                let reward_spec = self.reward_spec.clone();
                let params = self.params.clone();
                let catalogue = InitCatalogue::default();
                let bound = self.bound.clone();
                let warmup = self.cfg.warmup_steps / workers;
                let seed = self.seed.wrapping_add(1 + w as u64);
                scope.spawn(move || {
                    let mut rng = ChaCha12Rng::seed_from_u64(seed);
                    let mut own_steps = 0usize;
                    loop {
                        if stop.load(Ordering::Relaxed) {
                            break;
                        }
                        if episodes_started.fetch_add(1, Ordering::SeqCst) >= cfg.episodes {
                            break;
                        }
                        let policy = shared.lock().expect("policy lock").clone();
                        let mut pipeline = match ActionPipeline::new(cfg, false) {
                            Ok(p) => p,
                            Err(_) => break,
                        };
                        let mut state = match reset(task, &catalogue, &mut rng) {
                            Ok(s) => s,
                            Err(_) => break,
                        };
                        pipeline.reset(&state);
                        let time_limit = cfg.episode_len_steps as f64 * cfg.policy_dt();
                        let mut ret = 0.0;
                        let mut steps = 0usize;
                        let mut held: Option<(Vec<f64>, usize)> = None;
                        for _ in 0..cfg.episode_len_steps {
                            let action = if own_steps < warmup {
                                match &mut held {
                                    Some((a, left)) if *left > 0 => {
                                        *left -= 1;
                                        a.clone()
                                    }
                                    _ => {
                                        let sc = cfg.warmup_action_scale_rad;
                                        let a: Vec<f64> = (0..ACTION_DIM)
                                            .map(|j| {
                                                (state.q[j] + rng.gen_range(-sc..sc))
                                                    .clamp(-PI + 1e-9, PI - 1e-9)
                                            })
                                            .collect();
                                        held = Some((a.clone(), cfg.warmup_action_hold_steps.saturating_sub(1)));
                                        a
                                    }
                                }
                            } else {
                                match policy_action(&policy, &params, &state, &bound, Some(&mut rng)) {
                                    Ok((a, _)) => a,
                                    Err(_) => break,
                                }
                            };
                            let full = match observe_full(&params, &state, task) {
                                Ok(f) => f,
                                Err(_) => break,
                            };
                            let step_out = pipeline.apply(&params, &state, &action);
                            let (next, tau) = match step_out {
                                Ok(v) => v,
                                Err(_) => break,
                            };
                            let r = match reward_spec.total(&env::features(&params, &next, &tau, task)) {
                                Ok(r) => r,
                                Err(_) => break,
                            };
                            let done = terminate(&next, task, time_limit);
                            let next_full = match observe_full(&params, &next, task) {
                                Ok(f) => f,
                                Err(_) => break,
                            };
                            if tx
                                .send(Msg::Step(Transition {
                                    state: full,
                                    action: action.clone(),
                                    reward: r,
                                    next_state: next_full,
                                    done: cuts_bootstrap(done),
                                }))
                                .is_err()
                            {
                                return;
                            }
                            ret += r;
                            steps += 1;
                            own_steps += 1;
                            state = next;
                            if done.is_some() {
                                break;
                            }
                        }
                        if tx.send(Msg::Episode { ret, steps }).is_err() {
                            return;
                        }
                    }
                });
            }
            drop(tx);

            let mut episode = 0usize;
            let mut stats = UpdateStats::default();
            while let Ok(msg) = rx.recv() {
                match msg {
                    Msg::Step(t) => {
                        self.replay.push(t);
                        self.env_steps += 1;
                        self.maybe_update(&mut stats)?;
                    }
                    Msg::Episode { ret, steps } => {
                        self.metrics.push(EpisodeMetrics {
                            episode,
                            env_steps: self.env_steps,
                            ret,
                            steps,
                            critic_loss: stats.critic_mean(),
                            actor_loss: stats.actor_mean(),
                            smoothing_term: stats.smoothing_mean(),
                            alpha_t: self.nets.temperature.value(),
                            mean_alpha: stats.alpha_mean(),
                            eval_return: None,
                        });
                        stats = UpdateStats::default();
                        episode += 1;
                        *shared.lock().expect("policy lock") = self.nets.policy.clone();
                        if episode >= self.cfg.episodes {
                            stop.store(true, Ordering::Relaxed);
                        }
                    }
                }
            }
            Ok(())
        })?;
        Ok(())
    }
}

#[derive(Default)]
struct UpdateStats {
    critic: Vec<f64>,
    actor: Vec<f64>,
    smoothing: Vec<f64>,
    alpha_sums: Option<Vec<f64>>,
    alpha_count: usize,
}

impl UpdateStats {
    fn push(&mut self, c1: f64, c2: f64, astats: &crate::sac::losses::ActorStats) {
        self.critic.push(0.5 * (c1 + c2));
        self.actor.push(astats.loss);
        self.smoothing.push(astats.smoothing_term);
        if let Some(a) = &astats.mean_alpha {
            let sums = self.alpha_sums.get_or_insert_with(|| vec![0.0; a.len()]);
            for (s, v) in sums.iter_mut().zip(a) {
                *s += v;
            }
            self.alpha_count += 1;
        }
    }

    fn mean(v: &[f64]) -> f64 {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    fn critic_mean(&self) -> f64 {
        Self::mean(&self.critic)
    }

    fn actor_mean(&self) -> f64 {
        Self::mean(&self.actor)
    }

    fn smoothing_mean(&self) -> f64 {
        Self::mean(&self.smoothing)
    }

    fn alpha_mean(&self) -> Option<Vec<f64>> {
        self.alpha_sums
            .as_ref()
            .map(|s| s.iter().map(|v| v / self.alpha_count.max(1) as f64).collect())
    }
}

// ── stage 1 ─────────────────────────────────────────────────────────────

pub struct Stage1Output {
    pub best_expert: ParamSet,
    pub best_eval_return: f64,
    pub nets: SacNets,
    pub metrics: Vec<EpisodeMetrics>,
    pub env_steps: usize,
}

/// Single-expert SAC on one stage-1 task (recovery or rhythmic).
pub fn run_stage1(task: Task, cfg: &TrainConfig, seed: u64) -> Result<Stage1Output> {
    if task == Task::Multimodal {
        return Err(Error::contract("run_stage1", "stage 1 trains recovery or rhythmic only"));
    }
    let layout = ObsLayout::for_task(task);
    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0xA5A5_5A5A);
    let expert_spec = MlpSpec::new(layout.dim, cfg.expert_hidden, 2 * ACTION_DIM)?;
    let critic_spec = MlpSpec::new(layout.dim + ACTION_DIM, cfg.critic_hidden, 1)?;
    let mut expert = ParamSet::init_he_uniform(expert_spec, &mut rng);
    crate::nets::init_policy_head(&mut expert);
    let nets = SacNets::new(
        Policy::Single(expert),
        ParamSet::init_he_uniform(critic_spec, &mut rng),
        ParamSet::init_he_uniform(critic_spec, &mut rng),
        Temperature::new(cfg.init_temperature)?,
    );

    let mut train = TrainLoop::new(cfg, task, nets, seed)?;
    train.train()?;

    let (best_eval_return, best_policy) = match train.best.take() {
        Some((r, p)) => (r, p),
        None => (f64::NEG_INFINITY, train.nets.policy.clone()),
    };
    let best_expert = match best_policy {
        Policy::Single(p) => p,
        _ => unreachable!("stage 1 trains a single expert"),
    };
    Ok(Stage1Output {
        best_expert,
        best_eval_return,
        nets: train.nets,
        metrics: train.metrics,
        env_steps: train.env_steps,
    })
}

// ── stage 2 ─────────────────────────────────────────────────────────────

/// Embed a narrower-input expert into a wider input layout by zero-filling
/// the weight rows of the missing trailing inputs.
pub fn pad_expert_input(p: &ParamSet, new_input: usize) -> Result<ParamSet> {
    let spec = p.spec();
    if new_input < spec.input {
        return Err(Error::shape(
            "pad_expert_input",
            format!("cannot shrink input {} to {new_input}", spec.input),
        ));
    }
    if new_input == spec.input {
        return Ok(p.clone());
    }
    let mut out = ParamSet::zeros(MlpSpec::new(new_input, spec.hidden, spec.output)?);
    let h = spec.hidden;
    out.w0.data_mut()[..spec.input * h].copy_from_slice(p.w0.data());
    out.b0 = p.b0.clone();
    out.w1 = p.w1.clone();
    out.b1 = p.b1.clone();
    out.w2 = p.w2.clone();
    out.b2 = p.b2.clone();
    Ok(out)
}

pub struct Stage2Output {
    pub nets: SacNets,
    pub best_bank: ExpertBank,
    pub best_eval_return: f64,
    pub metrics: Vec<EpisodeMetrics>,
    pub env_steps: usize,
}

/// Co-train the expert bank and gating network on the multimodal task,
/// starting from the two stage-1 experts. `arch` picks parameter fusion
/// or the output-blending baseline; critics start fresh.
pub fn run_stage2(
    pretrained_recovery: &ParamSet,
    pretrained_rhythmic: &ParamSet,
    arch: Arch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Stage2Output> {
    if arch == Arch::Single {
        return Err(Error::contract("run_stage2", "stage 2 trains mela or moe"));
    }
    let layout = ObsLayout::for_task(Task::Multimodal);
    let policy_dim = layout.policy.len();

    let a = pad_expert_input(pretrained_recovery, policy_dim)?;
    let b = pad_expert_input(pretrained_rhythmic, policy_dim)?;
    if !a.same_shape(&b) {
        return Err(Error::Checkpoint(format!(
            "incompatible stage-1 checkpoints: {:?} vs {:?}",
            a.spec(),
            b.spec()
        )));
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x5A5A_A5A5);
    let gating_spec = MlpSpec::new(layout.gating_dim(), cfg.gating_hidden, cfg.num_experts)?;
    let bank = init_stage2(&a, &b, cfg.num_experts, gating_spec, &mut rng)?;
    let critic_spec = MlpSpec::new(layout.dim + ACTION_DIM, cfg.critic_hidden, 1)?;
    let policy = match arch {
        Arch::Mela => Policy::Fused(bank),
        Arch::Moe => Policy::Blended(bank),
        Arch::Single => unreachable!(),
    };
    let nets = SacNets::new(
        policy,
        ParamSet::init_he_uniform(critic_spec, &mut rng),
        ParamSet::init_he_uniform(critic_spec, &mut rng),
        Temperature::new(cfg.init_temperature)?,
    );

    let mut train = TrainLoop::new(cfg, Task::Multimodal, nets, seed)?;
    train.train()?;

    let (best_eval_return, best_policy) = match train.best.take() {
        Some((r, p)) => (r, p),
        None => (f64::NEG_INFINITY, train.nets.policy.clone()),
    };
    let best_bank = match best_policy {
        Policy::Fused(b) | Policy::Blended(b) => b,
        Policy::Single(_) => unreachable!(),
    };
    Ok(Stage2Output {
        nets: train.nets,
        best_bank,
        best_eval_return,
        metrics: train.metrics,
        env_steps: train.env_steps,
    })
}
