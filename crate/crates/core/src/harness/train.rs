//! The training loop: per step obtain the policy action, the disturbance
//! estimate, and the filtered action; execute it; update the residual
//! model; store the transition. Per iteration, update the policy and append
//! one log record.

use super::calibrate::calibrate_dob;
use super::config::{ModeFlags, RunConfig};
use super::runlog::{IterRecord, RunLog, RunMeta};
use super::HarnessError;
use crate::cbf::{build_constraint, CbfConfig, ModelSnapshot, RobustnessMode};
use crate::dob::DobState;
use crate::dynamics::{nominal_deriv, Control, ModelParams, State, StateDeriv, STATE_DIM};
use crate::env::{control_box, Env, TaskKind, OBS_DIM};
use crate::qpfilter::FilterProblem;
use crate::residual::ResidualModel;
use crate::rl::{compute_advantages, update, PolicyCheckpoint, PolicyState, RolloutBuffer, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::{Duration, Instant};

/// Serialized artifact of a finished run: agent plus residual model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentCheckpoint {
    pub version: u32,
    pub policy: PolicyCheckpoint,
    pub residual: Option<crate::residual::ResidualCheckpoint>,
}

/// Everything `train` produces.
pub struct TrainOutput {
    pub log: RunLog,
    pub policy: PolicyState,
    pub residual: Option<ResidualModel>,
    /// Resolved estimation error bound (calibrated when configured `auto`).
    pub error_bound: f64,
    /// Measured wall time; reported by the CLI, never serialized into the
    /// log so identical runs stay byte-identical.
    pub wall_time: Duration,
}

/// Per-step filter machinery shared by training and evaluation.
struct ControlLoop {
    flags: ModeFlags,
    nominal_params: ModelParams,
    cbf_cfg: CbfConfig,
    slack_penalty: f64,
    lo: Vec<f64>,
    hi: Vec<f64>,
    dob: Option<DobState>,
    dob_t_sample: f64,
    error_bound: f64,
    // per-iteration counters
    interventions: u64,
    slack_events: u64,
    degenerate_events: u64,
    dob_error_sum: f64,
    dob_error_count: u64,
}

impl ControlLoop {
    fn new(cfg: &RunConfig, error_bound: f64) -> Self {
        let flags = cfg.filter_mode.flags();
        let bx = control_box(cfg.task.robot);
        let robustness = if flags.dob { cfg.robustness } else { RobustnessMode::None };
        Self {
            flags,
            nominal_params: ModelParams::defaults_for(cfg.task.robot),
            cbf_cfg: CbfConfig {
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                relative_degree: 2,
                robustness,
            },
            slack_penalty: cfg.slack_penalty,
            lo: bx.lo.to_vec(),
            hi: bx.hi.to_vec(),
            dob: None,
            dob_t_sample: cfg.dob_t_sample,
            error_bound,
            interventions: 0,
            slack_events: 0,
            degenerate_events: 0,
            dob_error_sum: 0.0,
            dob_error_count: 0,
        }
    }

    fn reset_episode(&mut self, cfg: &RunConfig, start: State) {
        if self.flags.dob {
            self.dob = Some(DobState::new(start, cfg.dob_a, cfg.dob_t_sample, self.error_bound));
        }
    }

    fn reset_counters(&mut self) {
        self.interventions = 0;
        self.slack_events = 0;
        self.degenerate_events = 0;
        self.dob_error_sum = 0.0;
        self.dob_error_count = 0;
    }

    /// Current estimate, refreshing the piecewise-constant law when a
    /// sampling interval has elapsed.
    fn disturbance_estimate(&mut self, x: &State) -> [f64; STATE_DIM] {
        match &mut self.dob {
            Some(dob) => {
                if dob.since_update >= self.dob_t_sample - 1e-12 {
                    dob.pc_update(x);
                }
                dob.d_hat
            }
            None => [0.0; STATE_DIM],
        }
    }

    /// Filter the proposed action through the barrier QP.
    fn filter(
        &mut self,
        env: &Env,
        residual: Option<&ResidualModel>,
        u_rl: &[f64; 2],
        d_hat: &[f64; STATE_DIM],
    ) -> [f64; 2] {
        if !self.flags.cbf {
            return *u_rl;
        }
        let snapshot = ModelSnapshot::nominal(
            env.cfg.robot,
            self.nominal_params,
            if self.flags.residual { residual } else { None },
        );
        let mut constraints = Vec::new();
        for b in env.barriers() {
            let built = build_constraint(
                &env.state,
                &b,
                &snapshot,
                d_hat,
                self.error_bound,
                &self.cbf_cfg,
                0.0,
            );
            if built.degenerate {
                self.degenerate_events += 1;
            }
            constraints.push(built.constraint);
        }
        let mut problem = FilterProblem::with_identity_weight(
            u_rl.to_vec(),
            constraints,
            self.lo.clone(),
            self.hi.clone(),
        )
        .expect("filter problem is well-formed");
        problem.slack_penalty = self.slack_penalty;
        let res = problem.solve();
        if res.intervened {
            self.interventions += 1;
        }
        if res.slack_used > 0.0 {
            self.slack_events += 1;
        }
        [res.u_safe[0], res.u_safe[1]]
    }

    /// Advance the observer after the plant step, using the model as the
    /// filter saw it.
    fn observer_step(
        &mut self,
        x_before: &State,
        control: &Control,
        residual: Option<&ResidualModel>,
        lumped: &[f64; STATE_DIM],
        dt: f64,
    ) {
        let params = self.nominal_params;
        let use_res = self.flags.residual;
        if let Some(dob) = &mut self.dob {
            // observer quality metric: distance to the lumped disturbance
            // net of what the residual model already explains
            let res_pred = match (use_res, residual) {
                (true, Some(r)) => r.predict(x_before, control).to_array(),
                _ => [0.0; STATE_DIM],
            };
            let mut err2 = 0.0;
            for i in 0..STATE_DIM {
                let target = lumped[i] - res_pred[i];
                err2 += (dob.d_hat[i] - target) * (dob.d_hat[i] - target);
            }
            self.dob_error_sum += err2.sqrt();
            self.dob_error_count += 1;

            dob.predictor_step(
                x_before,
                |s| {
                    let mut d = nominal_deriv(s, control, &params).to_array();
                    if use_res {
                        if let Some(r) = residual {
                            let rp = r.predict(s, control).to_array();
                            for i in 0..STATE_DIM {
                                d[i] += rp[i];
                            }
                        }
                    }
                    StateDeriv::from_array(d)
                },
                dt,
            );
        }
    }
}

/// Run the full training loop.
pub fn train(cfg: &RunConfig) -> Result<TrainOutput, HarnessError> {
    let started = Instant::now();
    let flags = cfg.filter_mode.flags();
    let bx = control_box(cfg.task.robot);

    let error_bound = if flags.dob {
        match cfg.dob_error_bound {
            Some(b) => b,
            None => calibrate_dob(cfg, super::calibrate::default_calibration_steps(cfg))?.suggested_bound,
        }
    } else {
        0.0
    };

    let mut policy_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    policy_rng.set_stream(1);
    let mut action_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    action_rng.set_stream(2);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(3);
    let mut residual_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    residual_rng.set_stream(4);

    let mut policy = PolicyState::new(
        OBS_DIM,
        2,
        &cfg.rl.hidden,
        bx.lo.to_vec(),
        bx.hi.to_vec(),
        cfg.task.target_cost,
        cfg.rl.lambda_init,
        cfg.rl.log_std_init,
        &mut policy_rng,
    );
    let mut residual = if flags.residual {
        Some(ResidualModel::new(&cfg.residual_hidden, cfg.residual_lr, &mut residual_rng))
    } else {
        None
    };

    let (mut env, _) = Env::new(cfg.task, cfg.seed)?;
    let mut cl = ControlLoop::new(cfg, error_bound);
    let ppo = cfg.rl.ppo_params();

    let meta = RunMeta {
        format: 1,
        flags,
        seed: cfg.seed,
        task: cfg.task.kind,
        robot: cfg.task.robot,
    };
    let mut log = RunLog::new(meta);
    let mut buffer = RolloutBuffer::new();
    let mut sim_time = 0.0;

    for iteration in 1..=cfg.rl.iterations {
        buffer.clear();
        cl.reset_counters();
        let mut violations = 0u64;
        let mut residual_loss_sum = 0.0;
        let mut residual_loss_count = 0u64;
        let mut steps = 0u64;

        for _ in 0..cfg.rl.episodes_per_iter {
            let mut obs = env.reset()?;
            cl.reset_episode(cfg, env.state);
            loop {
                let (u_rl, lp_rl) = policy.act(&obs, &mut action_rng);
                let u_rl2 = [u_rl[0], u_rl[1]];
                let d_hat = cl.disturbance_estimate(&env.state);
                let u_safe = cl.filter(&env, residual.as_ref(), &u_rl2, &d_hat);
                let intervened = u_safe != u_rl2;
                let log_prob = if intervened {
                    policy.log_prob(&obs, &u_safe)
                } else {
                    lp_rl
                };

                let x_before = env.state;
                let control = Control::from_array(cfg.task.robot, u_safe);
                let nominal_before = nominal_deriv(&x_before, &control, &cl.nominal_params);
                let lumped = env.lumped_disturbance(&control);

                let out = env.step(u_safe);
                steps += 1;
                sim_time += cfg.task.dt;
                violations += out.cost as u64;

                cl.observer_step(&x_before, &control, residual.as_ref(), &lumped, cfg.task.dt);

                if let Some(res) = &mut residual {
                    let xdot_fd = finite_difference(&x_before, &env.state, cfg.task.dt);
                    if let Some(loss) = res.update(&x_before, &control, &xdot_fd, &nominal_before) {
                        residual_loss_sum += loss;
                        residual_loss_count += 1;
                    }
                }

                buffer.push(Transition {
                    obs,
                    next_obs: out.obs.clone(),
                    u_safe: u_safe.to_vec(),
                    u_rl: u_rl.clone(),
                    reward: out.reward,
                    cost: out.cost,
                    log_prob,
                    done: out.done,
                });
                obs = out.obs;
                if out.done {
                    break;
                }
            }
        }

        compute_advantages(&policy, &mut buffer, cfg.rl.gamma, cfg.rl.gae_lambda);
        let stats = update(&mut policy, &buffer, &ppo, &mut shuffle_rng);
        if std::env::var_os("SAFERL_DEBUG_ITER").is_some() {
            eprintln!(
                "[debug] iter={iteration} rew={:.2} cost={:.2} lambda={:.2} clipfrac={:.3} vloss={:.3} cvloss={:.3}",
                stats.mean_episode_reward,
                stats.mean_episode_cost,
                stats.lambda,
                stats.clip_fraction,
                stats.value_loss,
                stats.cost_value_loss
            );
        }

        log.push(IterRecord {
            iteration,
            mean_episode_reward: stats.mean_episode_reward,
            mean_episode_cost: stats.mean_episode_cost,
            violations,
            slack_events: cl.slack_events,
            intervention_rate: cl.interventions as f64 / steps.max(1) as f64,
            dob_error_estimate: cl.dob_error_sum / cl.dob_error_count.max(1) as f64,
            residual_loss: residual_loss_sum / residual_loss_count.max(1) as f64,
            sim_time_s: sim_time,
        });
    }

    let wall_time = started.elapsed();
    if let Some(dir) = &cfg.out {
        write_outputs(dir, cfg, &log, &policy, residual.as_ref())?;
    }

    Ok(TrainOutput { log, policy, residual, error_bound, wall_time })
}

fn finite_difference(before: &State, after: &State, dt: f64) -> StateDeriv {
    let a = before.to_array();
    let b = after.to_array();
    let mut d = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        d[i] = (b[i] - a[i]) / dt;
    }
    StateDeriv::from_array(d)
}

fn write_outputs(
    dir: &Path,
    cfg: &RunConfig,
    log: &RunLog,
    policy: &PolicyState,
    residual: Option<&ResidualModel>,
) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(super::runlog::RunLogError::Io)?;
    log.write_files(dir)?;
    let ck = AgentCheckpoint {
        version: 1,
        policy: policy.to_checkpoint(),
        residual: residual.map(|r| r.to_checkpoint()),
    };
    let text = serde_json::to_string(&ck).expect("checkpoint serializes");
    std::fs::write(dir.join("checkpoint.json"), text).map_err(super::runlog::RunLogError::Io)?;
    std::fs::write(dir.join("config_used.cfg"), cfg.render())
        .map_err(super::runlog::RunLogError::Io)?;
    Ok(())
}

/// Load an agent checkpoint and verify it matches the configuration.
pub fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<(PolicyState, Option<ResidualModel>), HarnessError> {
    let text = std::fs::read_to_string(path).map_err(super::runlog::RunLogError::Io)?;
    let ck: AgentCheckpoint = serde_json::from_str(&text)
        .map_err(|e| HarnessError::IncompatibleCheckpoint(e.to_string()))?;
    if ck.version != 1 {
        return Err(HarnessError::IncompatibleCheckpoint(format!(
            "unsupported checkpoint version {}",
            ck.version
        )));
    }
    let policy = PolicyState::from_checkpoint(&ck.policy)
        .map_err(|e| HarnessError::IncompatibleCheckpoint(e.to_string()))?;
    if policy.obs_dim() != OBS_DIM || policy.act_dim() != 2 {
        return Err(HarnessError::IncompatibleCheckpoint(format!(
            "agent expects obs dim {}, harness provides {}",
            policy.obs_dim(),
            OBS_DIM
        )));
    }
    let flags = cfg.filter_mode.flags();
    let residual = match (&ck.residual, flags.residual) {
        (Some(rck), true) => Some(
            ResidualModel::from_checkpoint(rck)
                .map_err(|e| HarnessError::IncompatibleCheckpoint(e.to_string()))?,
        ),
        (None, true) => {
            return Err(HarnessError::IncompatibleCheckpoint(
                "mode requires a residual model but the checkpoint has none".into(),
            ))
        }
        _ => None,
    };
    Ok((policy, residual))
}

/// Evaluation summary over a fixed number of deterministic episodes.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: u32,
    pub mean_reward: f64,
    pub mean_cost: f64,
    pub violation_steps: u64,
    /// Arena task only: completed trips and their mean duration.
    pub trips: u32,
    pub mean_commute_time: Option<f64>,
    pub violations_per_trip: Option<f64>,
}

/// Deterministic evaluation (policy std = 0, residual frozen). The filter
/// configured by `cfg.filter_mode` stays active: it is part of the deployed
/// controller.
pub fn evaluate(
    policy: &PolicyState,
    residual: Option<&ResidualModel>,
    cfg: &RunConfig,
    episodes: u32,
) -> Result<EvalSummary, HarnessError> {
    if episodes == 0 {
        return Ok(EvalSummary::default());
    }
    let error_bound = if cfg.filter_mode.flags().dob {
        match cfg.dob_error_bound {
            Some(b) => b,
            None => calibrate_dob(cfg, super::calibrate::default_calibration_steps(cfg))?.suggested_bound,
        }
    } else {
        0.0
    };
    let (mut env, _) = Env::new(cfg.task, cfg.seed)?;
    let mut cl = ControlLoop::new(cfg, error_bound);

    let mut total_reward = 0.0;
    let mut total_cost = 0.0;
    let mut violation_steps = 0u64;
    let mut commutes: Vec<f64> = Vec::new();

    for _ in 0..episodes {
        let mut obs = env.reset()?;
        cl.reset_episode(cfg, env.state);
        loop {
            let u_rl = policy.act_mean(&obs);
            let u_rl2 = [u_rl[0], u_rl[1]];
            let d_hat = cl.disturbance_estimate(&env.state);
            let u_safe = cl.filter(&env, residual, &u_rl2, &d_hat);

            let x_before = env.state;
            let control = Control::from_array(cfg.task.robot, u_safe);
            let lumped = env.lumped_disturbance(&control);
            let out = env.step(u_safe);
            cl.observer_step(&x_before, &control, residual, &lumped, cfg.task.dt);

            total_reward += out.reward;
            total_cost += out.cost;
            violation_steps += out.cost as u64;
            if let Some(t) = out.info.commute_time {
                commutes.push(t);
            }
            obs = out.obs;
            if out.done {
                break;
            }
        }
    }

    let trips = commutes.len() as u32;
    let mean_commute_time = if cfg.task.kind == TaskKind::Arena && trips > 0 {
        Some(commutes.iter().sum::<f64>() / trips as f64)
    } else {
        None
    };
    let violations_per_trip = if cfg.task.kind == TaskKind::Arena && trips > 0 {
        Some(violation_steps as f64 / trips as f64)
    } else {
        None
    };
    Ok(EvalSummary {
        episodes,
        mean_reward: total_reward / episodes as f64,
        mean_cost: total_cost / episodes as f64,
        violation_steps,
        trips,
        mean_commute_time,
        violations_per_trip,
    })
}
