//! Scratch diagnostic: lambda/GAE tuning on the leaky-boundary cases.
use saferl_core::harness::{train, FilterMode, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let mode: FilterMode = args[1].parse().unwrap();
    let seed: u64 = args[2].parse().unwrap();
    let gae: f64 = args[3].parse().unwrap();
    let llr: f64 = args[4].parse().unwrap();
    let mut cfg = RunConfig::default();
    cfg.filter_mode = mode;
    cfg.seed = seed;
    cfg.rl.gae_lambda = gae;
    cfg.rl.lambda_lr = llr;
    let out = train(&cfg).unwrap();
    let n = out.log.records.len();
    let f30_cost = out.log.records[n-30..].iter().map(|r| r.mean_episode_cost).sum::<f64>() / 30.0;
    let f10_rew = out.log.records[n-10..].iter().map(|r| r.mean_episode_reward).sum::<f64>() / 10.0;
    let mc = out.log.records.iter().map(|r| r.mean_episode_cost).sum::<f64>() / n as f64;
    println!("mode={mode:12} seed={seed} gae={gae} llr={llr}: mean_cost={mc:6.2} final30_cost={f30_cost:6.2} final10_rew={f10_rew:6.2}");
}
