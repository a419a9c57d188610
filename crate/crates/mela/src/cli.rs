//! Command-line entry points: training (both stages), evaluation,
//! activation analysis, expert-count sweeps, embedding export, and the
//! architecture comparison table. Every artifact lands under `--out` with
//! a manifest of names and content hashes; writes are atomic.

use crate::analysis::{
    embedding_csv, learning_curve_auc, mean_std, ActivationMatrix, ActivationRow, ComparisonTable,
};
use crate::checkpoint::{atomic_write, Checkpoint};
use crate::config::RunConfig;
use crate::env::{ModeLabel, Task};
use crate::error::{Error, Result};
use crate::sac::{
    evaluate, run_stage1, run_stage2, Arch, EpisodeMetrics, EvalSummary, StepRecord,
};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Parser)]
#[command(
    name = "mela",
    about = "Multi-expert policy synthesis on a planar pendulum",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonOpts {
    /// Output directory for artifacts.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional key = value config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Trailing `--key value` pairs overriding any config key.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train stage 1 (single expert) or stage 2 (expert bank + gating).
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        stage: u8,
        /// Stage-1 recovery checkpoint (stage 2 only).
        #[arg(long)]
        recovery_checkpoint: Option<PathBuf>,
        /// Stage-1 rhythmic checkpoint (stage 2 only).
        #[arg(long)]
        rhythmic_checkpoint: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Evaluate a checkpoint deterministically and dump logs.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        /// Architecture the checkpoint is expected to hold.
        #[arg(long)]
        expect_arch: Option<String>,
        /// Task to evaluate on (defaults to the checkpoint's natural task).
        #[arg(long)]
        task: Option<String>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Aggregate evaluation step logs into a mode-by-expert matrix.
    ActivationMatrix {
        /// steps.jsonl files produced by `eval`.
        #[arg(long, required = true, num_args = 1..)]
        steps: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Export labelled action/weight vectors for external embedding.
    ExportEmbedding {
        #[arg(long, required = true, num_args = 1..)]
        steps: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Train stage 2 at several expert counts under a matched budget.
    ExpertSweep {
        #[arg(long)]
        recovery_checkpoint: PathBuf,
        #[arg(long)]
        rhythmic_checkpoint: PathBuf,
        /// Comma-separated expert counts, e.g. 2,4,8.
        #[arg(long, value_delimiter = ',', required = true)]
        experts: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Compare learning-curve AUCs of fused vs output-blended runs.
    Compare {
        /// metrics.jsonl files of fused (mela) runs.
        #[arg(long, required = true, num_args = 1..)]
        mela: Vec<PathBuf>,
        /// metrics.jsonl files of mixture (moe) runs.
        #[arg(long, required = true, num_args = 1..)]
        moe: Vec<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
}

/// Parse trailing `--key value` pairs.
fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = raw.iter();
    while let Some(k) = it.next() {
        let key = k
            .strip_prefix("--")
            .ok_or_else(|| Error::Config(format!("expected --key, got `{k}`")))?;
        let v = it
            .next()
            .ok_or_else(|| Error::Config(format!("missing value for --{key}")))?;
        out.push((key.to_string(), v.clone()));
    }
    Ok(out)
}

fn load_config(common: &CommonOpts) -> Result<RunConfig> {
    let overrides = parse_overrides(&common.overrides)?;
    RunConfig::from_sources(common.config.as_deref(), &overrides)
}

// ── artifact bookkeeping ────────────────────────────────────────────────

struct Artifacts {
    dir: PathBuf,
    hashes: BTreeMap<String, String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            hashes: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        atomic_write(&path, bytes)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        let digest: [u8; 32] = hasher.finalize().into();
        self.hashes
            .insert(name.to_string(), digest.iter().map(|b| format!("{b:02x}")).collect());
        Ok(path)
    }

    fn finish(&mut self) -> Result<()> {
        let manifest = serde_json::json!({ "artifacts": self.hashes });
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        atomic_write(&self.dir.join("manifest.json"), body.as_bytes())?;
        Ok(())
    }
}

fn metrics_jsonl(metrics: &[EpisodeMetrics]) -> Vec<u8> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).expect("metrics serialize"));
        out.push('\n');
    }
    out.into_bytes()
}

fn steps_jsonl(records: &[StepRecord]) -> Vec<u8> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("step serializes"));
        out.push('\n');
    }
    out.into_bytes()
}

/// The 25 Hz activation log: {step, mode, alpha} per row.
fn activation_jsonl(records: &[StepRecord]) -> Vec<u8> {
    let mut out = String::new();
    for r in records {
        if let (Some(mode), Some(alpha)) = (r.mode, &r.alpha) {
            let row = serde_json::json!({ "step": r.step, "mode": mode.name(), "alpha": alpha });
            out.push_str(&serde_json::to_string(&row).expect("activation row"));
            out.push('\n');
        }
    }
    out.into_bytes()
}

fn trajectory_csv(records: &[StepRecord]) -> Vec<u8> {
    let mut out = String::from("episode,step,t,q1,q2,qd1,qd2,tau1,tau2,action1,action2,reward");
    let n_terms = records.first().map_or(0, |r| r.terms.len());
    if let Some(first) = records.first() {
        for (kind, _) in &first.terms {
            out.push_str(&format!(",term_{}", kind.name()));
        }
        let n_alpha = first.alpha.as_ref().map_or(0, |a| a.len());
        for k in 0..n_alpha {
            out.push_str(&format!(",alpha_{}", k + 1));
        }
    }
    out.push_str(",mode\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.episode,
            r.step,
            r.t,
            r.q[0],
            r.q[1],
            r.qd[0],
            r.qd[1],
            r.tau[0],
            r.tau[1],
            r.action[0],
            r.action[1],
            r.reward
        ));
        debug_assert_eq!(r.terms.len(), n_terms);
        for (_, v) in &r.terms {
            out.push_str(&format!(",{v}"));
        }
        if let Some(alpha) = &r.alpha {
            for v in alpha {
                out.push_str(&format!(",{v}"));
            }
        }
        out.push_str(&format!(",{}\n", r.mode.map_or("", |m| m.name())));
    }
    out.into_bytes()
}

// ── commands ────────────────────────────────────────────────────────────

pub fn cmd_train(
    stage: u8,
    recovery_ckpt: Option<&Path>,
    rhythmic_ckpt: Option<&Path>,
    common: &CommonOpts,
) -> Result<()> {
    let cfg = load_config(common)?;
    let mut artifacts = Artifacts::new(&common.out)?;
    artifacts.write("run.cfg", cfg.snapshot().as_bytes())?;
    let hash = cfg.hash();

    match stage {
        1 => {
            if cfg.task == Task::Multimodal {
                return Err(Error::Config(
                    "stage 1 trains `recovery` or `rhythmic`; set --task".into(),
                ));
            }
            let out = run_stage1(cfg.task, &cfg.train, cfg.seed)?;
            artifacts.write("metrics.jsonl", &metrics_jsonl(&out.metrics))?;
            let final_ck = Checkpoint::from_nets(&out.nets, hash);
            artifacts.write("checkpoint.final.ckpt", &final_ck.to_bytes())?;
            let mut best_nets = out.nets.clone();
            best_nets.policy = crate::sac::Policy::Single(out.best_expert.clone());
            let best_ck = Checkpoint::from_nets(&best_nets, hash);
            artifacts.write("checkpoint.best.ckpt", &best_ck.to_bytes())?;
            eprintln!(
                "stage 1 ({}) done: {} episodes, {} env steps, best eval return {:.2}",
                cfg.task.name(),
                out.metrics.len(),
                out.env_steps,
                out.best_eval_return
            );
        }
        2 => {
            if cfg.arch == Arch::Single {
                return Err(Error::Config("stage 2 needs --arch mela or --arch moe".into()));
            }
            let rec_path = recovery_ckpt
                .ok_or_else(|| Error::Config("stage 2 needs --recovery-checkpoint".into()))?;
            let rhy_path = rhythmic_ckpt
                .ok_or_else(|| Error::Config("stage 2 needs --rhythmic-checkpoint".into()))?;
            let rec = Checkpoint::load(rec_path)?.single_expert()?;
            let rhy = Checkpoint::load(rhy_path)?.single_expert()?;
            let out = run_stage2(&rec, &rhy, cfg.arch, &cfg.train, cfg.seed)?;
            artifacts.write("metrics.jsonl", &metrics_jsonl(&out.metrics))?;
            let final_ck = Checkpoint::from_nets(&out.nets, hash);
            artifacts.write("checkpoint.final.ckpt", &final_ck.to_bytes())?;
            let mut best_nets = out.nets.clone();
            best_nets.policy = match cfg.arch {
                Arch::Mela => crate::sac::Policy::Fused(out.best_bank.clone()),
                Arch::Moe => crate::sac::Policy::Blended(out.best_bank.clone()),
                Arch::Single => unreachable!(),
            };
            artifacts.write(
                "checkpoint.best.ckpt",
                &Checkpoint::from_nets(&best_nets, hash).to_bytes(),
            )?;
            eprintln!(
                "stage 2 ({}) done: {} episodes, {} env steps, best eval return {:.2}",
                cfg.arch.name(),
                out.metrics.len(),
                out.env_steps,
                out.best_eval_return
            );
        }
        other => return Err(Error::Config(format!("unknown stage {other}"))),
    }
    artifacts.finish()
}

pub fn cmd_eval(
    checkpoint: &Path,
    episodes: usize,
    expect_arch: Option<&str>,
    task: Option<&str>,
    common: &CommonOpts,
) -> Result<EvalSummary> {
    let cfg = load_config(common)?;
    let ck = Checkpoint::load(checkpoint)?;
    if let Some(expect) = expect_arch {
        let expect = Arch::from_name(expect)?;
        if expect != ck.arch {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds a {} policy, not {}",
                ck.arch.name(),
                expect.name()
            )));
        }
    }
    let policy = ck.policy()?;
    let task = match task {
        Some(t) => Task::from_name(t)?,
        None => match ck.arch {
            Arch::Single => {
                // Infer the stage-1 task from the expert's input width.
                match &policy {
                    crate::sac::Policy::Single(p) if p.spec().input == crate::env::OBS_DIM_RECOVERY => {
                        Task::Recovery
                    }
                    _ => Task::Rhythmic,
                }
            }
            _ => Task::Multimodal,
        },
    };

    let mut artifacts = Artifacts::new(&common.out)?;
    artifacts.write("run.cfg", cfg.snapshot().as_bytes())?;
    let (summary, records) = evaluate(&policy, task, &cfg.train, episodes, cfg.seed, true)?;
    artifacts.write(
        "eval_summary.json",
        serde_json::to_string_pretty(&summary).expect("summary").as_bytes(),
    )?;
    artifacts.write("steps.jsonl", &steps_jsonl(&records))?;
    artifacts.write("trajectory.csv", &trajectory_csv(&records))?;
    if records.iter().any(|r| r.alpha.is_some()) {
        artifacts.write("activation.jsonl", &activation_jsonl(&records))?;
    }
    artifacts.finish()?;
    eprintln!(
        "eval done: task {}, {} episodes, mean return {:.2}, success rate {:.2}",
        task.name(),
        episodes,
        summary.mean_return,
        summary.success_rate
    );
    Ok(summary)
}

#[derive(Debug, Deserialize)]
struct StepRow {
    step: usize,
    mode: Option<ModeLabel>,
    alpha: Option<Vec<f64>>,
    action: Vec<f64>,
}

fn read_step_rows(paths: &[PathBuf]) -> Result<Vec<StepRow>> {
    let mut rows = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: StepRow = serde_json::from_str(line).map_err(|e| {
                Error::Config(format!("{}:{}: bad step row: {e}", path.display(), i + 1))
            })?;
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn cmd_activation_matrix(steps: &[PathBuf], common: &CommonOpts) -> Result<ActivationMatrix> {
    let rows = read_step_rows(steps)?;
    let labelled: Vec<ActivationRow> = rows
        .into_iter()
        .filter_map(|r| {
            match (r.mode, r.alpha) {
                (Some(mode), Some(alpha)) => Some(ActivationRow {
                    step: r.step,
                    mode,
                    alpha,
                }),
                _ => None,
            }
        })
        .collect();
    if labelled.is_empty() {
        return Err(Error::contract(
            "activation-matrix",
            "logs carry no labelled activation rows (need a multimodal bank evaluation)",
        ));
    }
    let matrix = ActivationMatrix::from_rows(&labelled)?;
    let mut artifacts = Artifacts::new(&common.out)?;
    artifacts.write("activation_matrix.csv", matrix.to_csv().as_bytes())?;
    artifacts.write("dominance.csv", matrix.dominance_csv().as_bytes())?;
    artifacts.finish()?;
    print!("{}", matrix.to_csv());
    Ok(matrix)
}

pub fn cmd_export_embedding(steps: &[PathBuf], common: &CommonOpts) -> Result<usize> {
    let rows = read_step_rows(steps)?;
    let data: Vec<(usize, ModeLabel, Vec<f64>, Vec<f64>)> = rows
        .into_iter()
        .filter_map(|r| match (r.mode, r.alpha) {
            (Some(mode), Some(alpha)) => Some((r.step, mode, r.action, alpha)),
            _ => None,
        })
        .collect();
    let csv = embedding_csv(&data);
    let mut artifacts = Artifacts::new(&common.out)?;
    artifacts.write("embedding.csv", csv.as_bytes())?;
    artifacts.finish()?;
    eprintln!("exported {} embedding rows", data.len());
    Ok(data.len())
}

pub fn cmd_expert_sweep(
    recovery_ckpt: &Path,
    rhythmic_ckpt: &Path,
    experts: &[usize],
    seeds: u64,
    common: &CommonOpts,
) -> Result<()> {
    let base = load_config(common)?;
    if base.arch == Arch::Single {
        return Err(Error::Config("expert sweep runs --arch mela or moe".into()));
    }
    let rec = Checkpoint::load(recovery_ckpt)?.single_expert()?;
    let rhy = Checkpoint::load(rhythmic_ckpt)?.single_expert()?;
    let mut artifacts = Artifacts::new(&common.out)?;
    let mut csv = String::from("num_experts,auc_mean,auc_std,final_return_mean\n");
    for &n in experts {
        let mut cfg = base.train.clone();
        cfg.num_experts = n;
        cfg.validate()
            .map_err(|e| Error::Config(format!("expert count {n}: {e}")))?;
        let mut aucs = Vec::new();
        let mut finals = Vec::new();
        for s in 0..seeds {
            let out = run_stage2(&rec, &rhy, base.arch, &cfg, base.seed + s)?;
            artifacts.write(
                &format!("metrics_n{n}_seed{s}.jsonl"),
                &metrics_jsonl(&out.metrics),
            )?;
            aucs.push(learning_curve_auc(&out.metrics));
            finals.push(out.metrics.last().map_or(0.0, |m| m.ret));
        }
        let (mean, std) = mean_std(&aucs);
        let (fin, _) = mean_std(&finals);
        csv.push_str(&format!("{n},{mean},{std},{fin}\n"));
        eprintln!("N={n}: AUC {mean:.1} ± {std:.1}");
    }
    artifacts.write("sweep.csv", csv.as_bytes())?;
    artifacts.finish()
}

fn read_metrics(path: &Path) -> Result<Vec<EpisodeMetrics>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| {
            Error::Config(format!("{}:{}: bad metrics row: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

pub fn cmd_compare(mela: &[PathBuf], moe: &[PathBuf], common: &CommonOpts) -> Result<ComparisonTable> {
    let auc_of = |paths: &[PathBuf]| -> Result<Vec<f64>> {
        paths
            .iter()
            .map(|p| Ok(learning_curve_auc(&read_metrics(p)?)))
            .collect()
    };
    let table = ComparisonTable::new(auc_of(mela)?, auc_of(moe)?);
    let mut artifacts = Artifacts::new(&common.out)?;
    artifacts.write("compare.csv", table.to_csv().as_bytes())?;
    artifacts.write(
        "compare.json",
        serde_json::to_string_pretty(&table).expect("table").as_bytes(),
    )?;
    artifacts.finish()?;
    print!("{}", table.to_csv());
    eprintln!(
        "fused mean AUC {:.2} vs blended {:.2}: fused {} blended",
        table.mela_mean,
        table.moe_mean,
        if table.mela_at_least_moe { ">=" } else { "<" }
    );
    Ok(table)
}

/// Dispatch a parsed command line. Errors map to a nonzero exit.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            stage,
            recovery_checkpoint,
            rhythmic_checkpoint,
            common,
        } => cmd_train(
            stage,
            recovery_checkpoint.as_deref(),
            rhythmic_checkpoint.as_deref(),
            &common,
        ),
        Command::Eval {
            checkpoint,
            episodes,
            expect_arch,
            task,
            common,
        } => cmd_eval(
            &checkpoint,
            episodes,
            expect_arch.as_deref(),
            task.as_deref(),
            &common,
        )
        .map(|_| ()),
        Command::ActivationMatrix { steps, common } => cmd_activation_matrix(&steps, &common).map(|_| ()),
        Command::ExportEmbedding { steps, common } => cmd_export_embedding(&steps, &common).map(|_| ()),
        Command::ExpertSweep {
            recovery_checkpoint,
            rhythmic_checkpoint,
            experts,
            seeds,
            common,
        } => cmd_expert_sweep(
            &recovery_checkpoint,
            &rhythmic_checkpoint,
            &experts,
            seeds,
            &common,
        ),
        Command::Compare { mela, moe, common } => cmd_compare(&mela, &moe, &common).map(|_| ()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_pairs_parse() {
        let pairs = parse_overrides(&[
            "--episodes".to_string(),
            "5".to_string(),
            "--seed".to_string(),
            "2".to_string(),
        ])
        .unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0], ("episodes".to_string(), "5".to_string()));
        assert!(parse_overrides(&["--dangling".to_string()]).is_err());
        assert!(parse_overrides(&["positional".to_string(), "x".to_string()]).is_err());
    }
}
