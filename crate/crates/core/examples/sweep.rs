//! Scratch diagnostic: hyperparameter sweep on the goal task.
use saferl_core::harness::{train, FilterMode, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let eps: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3e-4);
    let seed: u64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(1);
    let mode: FilterMode = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(FilterMode::None);
    let mut cfg = RunConfig::default();
    cfg.filter_mode = mode;
    cfg.seed = seed;
    cfg.rl.episodes_per_iter = eps;
    cfg.rl.lr = lr;
    let out = train(&cfg).unwrap();
    let n = out.log.records.len();
    let avg = |lo: usize, hi: usize| {
        out.log.records[lo..hi].iter().map(|r| r.mean_episode_reward).sum::<f64>() / (hi - lo) as f64
    };
    let cost_avg = out.log.records[n-10..].iter().map(|r| r.mean_episode_cost).sum::<f64>() / 10.0;
    println!(
        "eps={eps} lr={lr} seed={seed} mode={mode}: rew[it30-40]={:.2} rew[70-80]={:.2} rew[final10]={:.2} cost[final10]={:.2} wall={:.0}s",
        avg(30, 40), avg(70, 80), avg(n - 10, n), cost_avg, out.wall_time.as_secs_f64()
    );
}
