use mela::env::Task;
use mela::sac::{run_stage1, TrainConfig};
use std::time::Instant;

fn main() {
    let mut cfg = TrainConfig::desk_scale();
    cfg.episodes = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let task = match std::env::args().nth(2).as_deref() {
        Some("rhythmic") => Task::Rhythmic,
        _ => Task::Recovery,
    };
    let seed = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(0u64);
    let t0 = Instant::now();
    let out = run_stage1(task, &cfg, seed).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("elapsed {dt:.1} s, env steps {}, steps/s {:.0}", out.env_steps, out.env_steps as f64 / dt);
    for m in out.metrics.iter() {
        if m.episode % 5 == 0 || m.eval_return.is_some() {
            println!("ep {:3} steps {:6} ret {:8.2} critic {:8.4} actor {:8.3} smooth {:6.3} alphaT {:6.4} eval {:?}",
                m.episode, m.env_steps, m.ret, m.critic_loss, m.actor_loss, m.smoothing_term, m.alpha_t, m.eval_return);
        }
    }
    println!("best eval return {:.2}", out.best_eval_return);
}
