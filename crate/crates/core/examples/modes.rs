//! Scratch diagnostic: compare all filter modes on the goal task.
use saferl_core::harness::{train, FilterMode, RunConfig};

fn main() {
    let seed: u64 = std::env::args().nth(1).map(|s| s.parse().unwrap()).unwrap_or(1);
    let mode: FilterMode = std::env::args().nth(2).map(|s| s.parse().unwrap()).unwrap_or(FilterMode::None);
    let mut cfg = RunConfig::default();
    cfg.filter_mode = mode;
    cfg.seed = seed;
    let out = train(&cfg).unwrap();
    let n = out.log.records.len();
    let final10_rew = out.log.records[n-10..].iter().map(|r| r.mean_episode_reward).sum::<f64>() / 10.0;
    let final10_cost = out.log.records[n-10..].iter().map(|r| r.mean_episode_cost).sum::<f64>() / 10.0;
    let mean_cost = out.log.records.iter().map(|r| r.mean_episode_cost).sum::<f64>() / n as f64;
    let interv = out.log.records[n-10..].iter().map(|r| r.intervention_rate).sum::<f64>() / 10.0;
    let slack: u64 = out.log.records.iter().map(|r| r.slack_events).sum();
    println!("mode={mode:12} seed={seed} final_rew={final10_rew:7.2} final_cost={final10_cost:6.2} mean_cost={mean_cost:6.2} interv={interv:.3} slack={slack} bound={:.3} wall={:.0}s",
        out.error_bound, out.wall_time.as_secs_f64());
}
