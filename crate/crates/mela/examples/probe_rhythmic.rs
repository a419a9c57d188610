use mela::env::Task;
use mela::sac::{evaluate, run_stage1, Policy, TrainConfig};
use mela::reward::TermKind;

fn main() {
    let mut cfg = TrainConfig::desk_scale();
    let args: Vec<String> = std::env::args().collect();
    cfg.episodes = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    cfg.smoothing_coeff = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let seed = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    cfg.init_temperature = 0.2;
    cfg.warmup_action_scale_rad = 0.35;
    cfg.warmup_steps = 2000;
    let out = run_stage1(Task::Rhythmic, &cfg, seed).unwrap();
    println!("best eval {:.1}, env steps {}", out.best_eval_return, out.env_steps);
    let (summary, records) = evaluate(&Policy::Single(out.best_expert), Task::Rhythmic, &cfg, 20, 777, true).unwrap();
    println!("eval: return {:.2} success {:.2} gap {:.4}", summary.mean_return, summary.success_rate, summary.mean_reference_gap);
    // phase-tracking: mean weighted joint-ref term vs its 0.416 max, and total vs weight sum
    let n = records.len() as f64;
    let mut jr = 0.0; let mut total = 0.0;
    for r in &records {
        total += r.reward;
        jr += r.terms.iter().find(|(k, _)| *k == TermKind::JointReference).map(|(_, v)| *v).unwrap_or(0.0);
    }
    println!("mean/step: total {:.3} (max 0.808), joint_ref {:.3} (max 0.416) ratio {:.2}", total/n, jr/n, (jr/n)/0.416);
}
