use mela::env::Task;
use mela::sac::{evaluate, run_stage1, Policy, TrainConfig};
use std::time::Instant;

fn main() {
    let mut cfg = TrainConfig::desk_scale();
    cfg.episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let task = match std::env::args().nth(2).as_deref() {
        Some("rhythmic") => Task::Rhythmic,
        _ => Task::Recovery,
    };
    let seed = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    let t0 = Instant::now();
    let out = run_stage1(task, &cfg, seed).unwrap();
    println!("train: {:.0} s, {} env steps, best eval {:.1}", t0.elapsed().as_secs_f64(), out.env_steps, out.best_eval_return);
    let (summary, _) = evaluate(&Policy::Single(out.best_expert), task, &cfg, 50, 12345, false).unwrap();
    println!("eval 50 episodes: mean return {:.2}, success rate {:.2}, ref gap {:.4}",
        summary.mean_return, summary.success_rate, summary.mean_reference_gap);
    let mut by_term: std::collections::BTreeMap<String, usize> = Default::default();
    for e in &summary.episodes {
        *by_term.entry(format!("{:?}", e.termination)).or_default() += 1;
    }
    println!("terminations: {by_term:?}");
}
