//! Scratch diagnostic: PPO on a trivial 1D reach task.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saferl_core::rl::*;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut policy = PolicyState::new(2, 2, &[64, 64], vec![-2.0, -2.0], vec![2.0, 2.0], 5.0, 0.0, -0.5, &mut rng);
    let params = PpoParams::default();
    let mut arng = ChaCha8Rng::seed_from_u64(1);
    let mut srng = ChaCha8Rng::seed_from_u64(2);
    for iter in 0..60 {
        let mut buf = RolloutBuffer::new();
        let mut ep_rewards = vec![];
        for _ in 0..2 {
            // 1D double integrator-ish: x' = x + 0.05*u0; goal at g
            let mut x = arng.gen_range(-2.0..2.0f64);
            let g = arng.gen_range(-2.0..2.0f64);
            let mut total = 0.0;
            for t in 0..200 {
                let obs = vec![x, g - x];
                let (u, lp) = policy.act(&obs, &mut arng);
                let prev = (g - x).abs();
                x += 0.05 * u[0];
                let reward = prev - (g - x).abs();
                total += reward;
                buf.push(Transition {
                    obs, next_obs: vec![x, g - x],
                    u_safe: u.clone(), u_rl: u,
                    reward, cost: 0.0, log_prob: lp, done: t == 199,
                });
            }
            ep_rewards.push(total);
        }
        compute_advantages(&policy, &mut buf, 0.99, 0.95);
        let stats = update(&mut policy, &buf, &params, &mut srng);
        if iter % 10 == 0 || iter == 59 {
            println!("iter {iter:3} rew {:7.3} vloss {:8.4} ratio {:.3} clip {:.3}",
                ep_rewards.iter().sum::<f64>() / 2.0, stats.value_loss, stats.mean_ratio, stats.clip_fraction);
        }
    }
}
