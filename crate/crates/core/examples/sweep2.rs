//! Scratch diagnostic: pure-reach task learning.
use saferl_core::harness::{train, FilterMode, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(3e-4);
    let eps: u32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let logstd: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(-0.5);
    let mut cfg = RunConfig::default();
    cfg.filter_mode = FilterMode::None;
    cfg.seed = 1;
    cfg.task.n_hazards = 0;
    cfg.task.wind.magnitude = 0.0;
    cfg.task.mismatch_factor = 1.0;
    cfg.rl.lambda_init = 0.0;
    cfg.rl.lr = lr;
    cfg.rl.episodes_per_iter = eps;
    cfg.rl.log_std_init = logstd;
    let out = train(&cfg).unwrap();
    let n = out.log.records.len();
    let avg = |lo: usize, hi: usize| {
        out.log.records[lo..hi].iter().map(|r| r.mean_episode_reward).sum::<f64>() / (hi - lo) as f64
    };
    println!(
        "lr={lr} eps={eps} logstd={logstd}: it10-20={:.2} it40-50={:.2} it70-80={:.2} final10={:.2}",
        avg(10, 20), avg(40, 50), avg(70, 80), avg(n - 10, n)
    );
}
