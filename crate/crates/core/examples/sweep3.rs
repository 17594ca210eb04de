//! Scratch diagnostic: longer pure-reach training, curve shape.
use saferl_core::harness::{train, FilterMode, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let eps: u32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(4);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1e-3);
    let logstd: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(-0.5);
    let seed: u64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);
    let mut cfg = RunConfig::default();
    cfg.filter_mode = FilterMode::None;
    cfg.seed = seed;
    cfg.task.n_hazards = 0;
    cfg.task.wind.magnitude = 0.0;
    cfg.task.mismatch_factor = 1.0;
    cfg.rl.lambda_init = 0.0;
    cfg.rl.iterations = iters;
    cfg.rl.lr = lr;
    cfg.rl.episodes_per_iter = eps;
    cfg.rl.log_std_init = logstd;
    let out = train(&cfg).unwrap();
    let r: Vec<f64> = out.log.records.iter().map(|x| x.mean_episode_reward).collect();
    let w = 10;
    let avg: Vec<f64> = (0..r.len() / w).map(|k| r[k*w..(k+1)*w].iter().sum::<f64>() / w as f64).collect();
    println!("iters={iters} eps={eps} lr={lr} ls={logstd} seed={seed}");
    for (k, v) in avg.iter().enumerate() {
        if k % 3 == 0 || k == avg.len() - 1 {
            println!("  it {:4}: {v:6.2}", (k + 1) * w);
        }
    }
}
