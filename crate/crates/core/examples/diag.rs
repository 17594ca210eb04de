//! Scratch diagnostic: inspect trained behavior on the pure reach task.
use saferl_core::env::Env;
use saferl_core::harness::{train, FilterMode, RunConfig};

fn main() {
    let mut cfg = RunConfig::default();
    cfg.filter_mode = FilterMode::None;
    cfg.seed = 1;
    cfg.task.n_hazards = 0;
    cfg.task.wind.magnitude = 0.0;
    cfg.task.mismatch_factor = 1.0;
    cfg.rl.lambda_init = 0.0;
    cfg.rl.lr = 1e-3;
    cfg.rl.episodes_per_iter = 2;
    let out = train(&cfg).unwrap();
    let ck = out.policy.to_checkpoint();
    println!("log_std after training: {:?}", ck.log_std);

    // deterministic rollout trace
    let (mut env, mut obs) = Env::new(cfg.task, 99).unwrap();
    let mut total = 0.0;
    let mut goals = 0;
    for t in 0..400 {
        let u = out.policy.act_mean(&obs);
        let o = env.step([u[0], u[1]]);
        total += o.reward;
        if o.info.goal_reached { goals += 1; }
        if t % 50 == 0 {
            let gd = ((env.goal_pos()[0]-env.state.x_p).powi(2)+(env.goal_pos()[1]-env.state.y_p).powi(2)).sqrt();
            println!("t={t:3} pos=({:5.2},{:5.2}) v={:5.2} gdist={:4.2} u=({:5.2},{:5.2})",
                env.state.x_p, env.state.y_p, env.state.v_x, gd, u[0], u[1]);
        }
        obs = o.obs;
    }
    println!("eval total reward {total:.2}, goals {goals}");
}
