//! Scratch diagnostic: criterion-7 clause dry run across seeds and modes.
use saferl_core::harness::{train, FilterMode, RunConfig, RunLog};
use std::sync::Mutex;

fn final_window(log: &RunLog, n: usize, f: impl Fn(&saferl_core::harness::IterRecord) -> f64) -> f64 {
    let recs = &log.records;
    let lo = recs.len().saturating_sub(n);
    recs[lo..].iter().map(&f).sum::<f64>() / (recs.len() - lo) as f64
}

fn main() {
    let seeds: Vec<u64> = vec![0, 1, 2, 3, 4];
    let modes = [FilterMode::None, FilterMode::Cbf, FilterMode::DobCbf, FilterMode::ResCbf, FilterMode::ResDobCbf];
    let results: Mutex<Vec<(String, u64, RunLog)>> = Mutex::new(Vec::new());
    let jobs: Vec<(FilterMode, u64)> = modes.iter().flat_map(|m| seeds.iter().map(move |s| (*m, *s))).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..2 {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= jobs.len() { break; }
                let (mode, seed) = jobs[i];
                let mut cfg = RunConfig::default();
                cfg.filter_mode = mode;
                cfg.seed = seed;
                let out = train(&cfg).unwrap();
                results.lock().unwrap().push((mode.to_string(), seed, out.log));
            });
        }
    });
    let results = results.into_inner().unwrap();
    let get = |mode: &str, seed: u64| -> &RunLog {
        &results.iter().find(|(m, s, _)| m == mode && *s == seed).unwrap().2
    };
    let target = 5.0;
    println!("per-seed summary: mode seed mean_cost final30_cost final10_rew");
    for m in ["none", "cbf", "dob_cbf", "res_cbf", "res_dob_cbf"] {
        for &s in &seeds {
            let log = get(m, s);
            let mc = log.records.iter().map(|r| r.mean_episode_cost).sum::<f64>() / log.records.len() as f64;
            println!("  {m:12} {s} {mc:7.2} {:7.2} {:7.2}", final_window(log, 30, |r| r.mean_episode_cost), final_window(log, 10, |r| r.mean_episode_reward));
        }
    }
    // (a) mean cost over all iterations, averaged across seeds
    let mean_cost = |m: &str| seeds.iter().map(|&s| {
        let log = get(m, s);
        log.records.iter().map(|r| r.mean_episode_cost).sum::<f64>() / log.records.len() as f64
    }).sum::<f64>() / seeds.len() as f64;
    println!("(a) mean cost: none={:.2} cbf={:.2} dob={:.2} res={:.2} resdob={:.2}",
        mean_cost("none"), mean_cost("cbf"), mean_cost("dob_cbf"), mean_cost("res_cbf"), mean_cost("res_dob_cbf"));
    // (b) sign test
    for base in ["dob_cbf", "res_cbf"] {
        let wins = seeds.iter().filter(|&&s| {
            final_window(get("res_dob_cbf", s), 10, |r| r.mean_episode_reward)
                >= final_window(get(base, s), 10, |r| r.mean_episode_reward)
        }).count();
        println!("(b) res_dob_cbf >= {base}: {wins}/{} seeds", seeds.len());
    }
    // (c) gate
    for m in ["cbf", "dob_cbf", "res_cbf", "res_dob_cbf"] {
        let worst = seeds.iter().map(|&s| final_window(get(m, s), 30, |r| r.mean_episode_cost)).fold(0.0f64, f64::max);
        let avg = seeds.iter().map(|&s| final_window(get(m, s), 30, |r| r.mean_episode_cost)).sum::<f64>() / seeds.len() as f64;
        println!("(c) {m:12} final30 cost avg={avg:.2} worst={worst:.2} gate={}", 1.5 * target);
    }
}
