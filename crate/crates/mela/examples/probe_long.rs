use mela::env::Task;
use mela::sac::{evaluate, run_stage1, Policy, TrainConfig};
use std::time::Instant;

fn main() {
    let mut cfg = TrainConfig::desk_scale();
    let args: Vec<String> = std::env::args().collect();
    cfg.episodes = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(240);
    cfg.init_temperature = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.0);
    cfg.warmup_steps = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let seed = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    let task = match args.get(5).map(|s| s.as_str()) {
        Some("rhythmic") => Task::Rhythmic,
        _ => Task::Recovery,
    };
    let t0 = Instant::now();
    let out = run_stage1(task, &cfg, seed).unwrap();
    println!("train: {:.0} s, {} env steps, best eval {:.1}", t0.elapsed().as_secs_f64(), out.env_steps, out.best_eval_return);
    for m in out.metrics.iter().filter(|m| m.eval_return.is_some()) {
        println!("ep {:3} ret {:8.2} eval {:8.2} alphaT {:.4} smooth {:.3}", m.episode, m.ret, m.eval_return.unwrap(), m.alpha_t, m.smoothing_term);
    }
    let (summary, _) = evaluate(&Policy::Single(out.best_expert), task, &cfg, 50, 999, false).unwrap();
    println!("FINAL eval 50 eps: return {:.2} success {:.2} gap {:.4}", summary.mean_return, summary.success_rate, summary.mean_reference_gap);
}
