//! Goal-style navigation task with moving circular hazards, and the
//! two-endpoint arena commute task with a central hazard and four walls.
//!
//! The environment owns only the plant: true dynamics, wind, hazards, goal
//! bookkeeping. Observers, residual learning and the filter live in the
//! control loop.

use crate::cbf::{h_value, Barrier, CircleObstacle, WallBarrier};
use crate::disturbance::{wind_at, WindSpec};
use crate::dynamics::{
    integrate, true_plant_deriv, wrap_angle, Control, ControlBox, ModelParams, RobotKind, State,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Observation layout: pose (with yaw as sin/cos) and body velocities,
/// goal-relative position, and the K nearest hazards' relative positions
/// and velocities, zero-padded.
pub const OBS_HAZARD_SLOTS: usize = 4;
pub const OBS_DIM: usize = 7 + 2 + OBS_HAZARD_SLOTS * 4;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("layout sampling failed after {0} attempts (configuration too dense)")]
    LayoutSampling(usize),
}

/// Which task the environment realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    /// Reach randomly placed goals among moving hazards.
    Goal,
    /// Commute between two fixed endpoints inside a walled arena.
    Arena,
}

/// Full task parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub kind: TaskKind,
    pub robot: RobotKind,
    pub n_hazards: usize,
    pub hazard_radius: f64,
    pub hazard_speed: f64,
    pub goal_radius: f64,
    /// Half-width of the goal task's sampling region (m).
    pub region_half: f64,
    /// Half-width of the walled arena (m).
    pub arena_half_width: f64,
    pub episode_length: u32,
    /// Allowed expected violation steps per episode.
    pub target_cost: f64,
    pub wind: WindSpec,
    /// Gain scale applied to the true plant (1.0 = no internal error).
    pub mismatch_factor: f64,
    pub robot_radius: f64,
    pub dt: f64,
}

impl TaskConfig {
    /// Goal task, easier variant: four slow hazards.
    pub fn goal1(robot: RobotKind) -> Self {
        Self {
            kind: TaskKind::Goal,
            robot,
            n_hazards: 4,
            hazard_radius: 0.4,
            hazard_speed: 0.35,
            goal_radius: 0.3,
            region_half: 3.0,
            arena_half_width: 2.1,
            episode_length: 400,
            target_cost: 5.0,
            wind: default_wind(robot),
            mismatch_factor: 1.5,
            robot_radius: 0.15,
            dt: 0.02,
        }
    }

    /// Goal task, harder variant: eight hazards.
    pub fn goal2(robot: RobotKind) -> Self {
        Self { n_hazards: 8, ..Self::goal1(robot) }
    }

    /// Arena commute task: central hazard of radius 0.8 inside a
    /// 4.2 m x 4.2 m square.
    pub fn arena(robot: RobotKind) -> Self {
        Self {
            kind: TaskKind::Arena,
            n_hazards: 1,
            hazard_radius: 0.8,
            hazard_speed: 0.0,
            ..Self::goal1(robot)
        }
    }

    pub fn endpoints(&self) -> [[f64; 2]; 2] {
        let e = self.arena_half_width * 2.0 / 3.0;
        [[-e, -e], [e, e]]
    }

    pub fn is_valid(&self) -> bool {
        self.episode_length > 0
            && self.hazard_radius > 0.0
            && self.goal_radius > 0.0
            && self.robot_radius > 0.0
            && self.dt > 0.0
            && self.mismatch_factor > 0.0
    }
}

/// Paper wind magnitudes: 0.25 m/s^2 for Point, 2.5 m/s^2 for Car; the
/// direction rotates at 5 rad/s by default.
pub fn default_wind(robot: RobotKind) -> WindSpec {
    let magnitude = match robot {
        RobotKind::Point => 0.25,
        RobotKind::Car => 2.5,
    };
    WindSpec { magnitude, angular_rate: 5.0, phase: 0.0 }
}

/// Default admissible control box per robot.
pub fn control_box(robot: RobotKind) -> ControlBox {
    match robot {
        RobotKind::Point => ControlBox { lo: [-2.0, -2.0], hi: [2.0, 2.0] },
        RobotKind::Car => ControlBox { lo: [-1.0, -1.0], hi: [1.0, 1.0] },
    }
}

/// A circular hazard moving at constant velocity between boundary bounces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hazard {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

/// Per-step environment outputs.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// 1.0 when any barrier is violated at the new state, else 0.0.
    pub cost: f64,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    /// Minimum barrier value over all active barriers (+inf when none).
    pub h_min: f64,
    pub goal_reached: bool,
    /// Set on the step an arena trip completes.
    pub commute_time: Option<f64>,
}

/// One simulated task instance.
#[derive(Debug, Clone)]
pub struct Env {
    pub cfg: TaskConfig,
    pub state: State,
    pub hazards: Vec<Hazard>,
    goal: [f64; 2],
    active_endpoint: usize,
    t: f64,
    step_count: u32,
    prev_goal_dist: f64,
    nominal_params: ModelParams,
    true_params: ModelParams,
    rng: ChaCha8Rng,
    trip_start: f64,
}

impl Env {
    /// Build the environment and sample the initial layout.
    pub fn new(cfg: TaskConfig, seed: u64) -> Result<(Self, Vec<f64>), EnvError> {
        assert!(cfg.is_valid(), "invalid task configuration");
        let nominal_params = ModelParams::defaults_for(cfg.robot);
        let true_params = nominal_params.scaled(cfg.mismatch_factor);
        let mut env = Self {
            cfg,
            state: State::zero(),
            hazards: Vec::new(),
            goal: [0.0, 0.0],
            active_endpoint: 1,
            t: 0.0,
            step_count: 0,
            prev_goal_dist: 0.0,
            nominal_params,
            true_params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            trip_start: 0.0,
        };
        let obs = env.reset()?;
        Ok((env, obs))
    }

    /// Resample the layout and restart the episode clock. Consecutive
    /// resets draw from the same seeded stream, so a fresh environment
    /// plus a fixed reset count is fully reproducible.
    pub fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        self.t = 0.0;
        self.step_count = 0;
        self.sample_layout()?;
        self.prev_goal_dist = self.goal_distance();
        self.trip_start = 0.0;
        Ok(self.obs())
    }

    pub fn nominal_params(&self) -> &ModelParams {
        &self.nominal_params
    }

    pub fn true_params(&self) -> &ModelParams {
        &self.true_params
    }

    pub fn sim_time(&self) -> f64 {
        self.t
    }

    pub fn goal_pos(&self) -> [f64; 2] {
        self.goal
    }

    /// Current wind acceleration (world frame).
    pub fn wind_now(&self) -> [f64; 2] {
        wind_at(&self.cfg.wind, self.t)
    }

    /// Lumped disturbance seen by the nominal model at the current state:
    /// true derivative minus nominal derivative. Available because the
    /// simulator is the harness's own; used by calibration and logging only.
    pub fn lumped_disturbance(&self, control: &Control) -> [f64; 6] {
        let true_d = true_plant_deriv(&self.state, control, &self.true_params, self.wind_now());
        let nom = crate::dynamics::nominal_deriv(&self.state, control, &self.nominal_params);
        let mut out = [0.0; 6];
        let (t, n) = (true_d.to_array(), nom.to_array());
        for i in 0..6 {
            out[i] = t[i] - n[i];
        }
        out
    }

    fn half_extent(&self) -> f64 {
        match self.cfg.kind {
            TaskKind::Goal => self.cfg.region_half,
            TaskKind::Arena => self.cfg.arena_half_width,
        }
    }

    fn sample_layout(&mut self) -> Result<(), EnvError> {
        const MAX_TRIES: usize = 1000;
        let sep = self.cfg.hazard_radius + self.cfg.robot_radius + 0.2;
        let half = self.half_extent();

        for _ in 0..MAX_TRIES {
            let (pos, theta) = match self.cfg.kind {
                TaskKind::Goal => {
                    let margin = 0.95 * half;
                    (
                        [
                            self.rng.gen_range(-margin..margin),
                            self.rng.gen_range(-margin..margin),
                        ],
                        self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                    )
                }
                TaskKind::Arena => {
                    let start = self.cfg.endpoints()[0];
                    (start, self.rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
                }
            };

            let mut hazards = Vec::with_capacity(self.cfg.n_hazards);
            for _ in 0..self.cfg.n_hazards {
                let hp = match self.cfg.kind {
                    TaskKind::Goal => [
                        self.rng.gen_range(-half..half),
                        self.rng.gen_range(-half..half),
                    ],
                    TaskKind::Arena => [0.0, 0.0],
                };
                let ang = self.rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                hazards.push(Hazard {
                    pos: hp,
                    vel: [
                        self.cfg.hazard_speed * ang.cos(),
                        self.cfg.hazard_speed * ang.sin(),
                    ],
                });
            }
            let robot_clear = hazards.iter().all(|h| {
                let d = ((h.pos[0] - pos[0]).powi(2) + (h.pos[1] - pos[1]).powi(2)).sqrt();
                d >= sep
            });
            if !robot_clear {
                continue;
            }

            let goal = match self.cfg.kind {
                TaskKind::Goal => {
                    match self.sample_goal_pos(&hazards, pos) {
                        Some(g) => g,
                        None => continue,
                    }
                }
                TaskKind::Arena => self.cfg.endpoints()[1],
            };

            self.state = State::from_array([pos[0], pos[1], theta, 0.0, 0.0, 0.0]);
            self.hazards = hazards;
            self.goal = goal;
            self.active_endpoint = 1;
            return Ok(());
        }
        Err(EnvError::LayoutSampling(MAX_TRIES))
    }

    fn sample_goal_pos(&mut self, hazards: &[Hazard], robot: [f64; 2]) -> Option<[f64; 2]> {
        let half = self.half_extent();
        let margin = 0.9 * half;
        for _ in 0..1000 {
            let g = [
                self.rng.gen_range(-margin..margin),
                self.rng.gen_range(-margin..margin),
            ];
            let from_robot =
                ((g[0] - robot[0]).powi(2) + (g[1] - robot[1]).powi(2)).sqrt();
            if from_robot < 1.0 {
                continue;
            }
            let clear = hazards.iter().all(|h| {
                let d = ((h.pos[0] - g[0]).powi(2) + (h.pos[1] - g[1]).powi(2)).sqrt();
                d >= self.cfg.hazard_radius + self.cfg.goal_radius + 0.1
            });
            if clear {
                return Some(g);
            }
        }
        None
    }

    fn goal_distance(&self) -> f64 {
        ((self.state.x_p - self.goal[0]).powi(2) + (self.state.y_p - self.goal[1]).powi(2)).sqrt()
    }

    /// Barriers the filter must respect right now: every hazard, plus the
    /// four walls on the arena task.
    pub fn barriers(&self) -> Vec<Barrier> {
        let mut out: Vec<Barrier> = self
            .hazards
            .iter()
            .map(|h| {
                Barrier::Circle(CircleObstacle {
                    center: h.pos,
                    velocity: h.vel,
                    r_i: self.cfg.hazard_radius,
                    r_p: self.cfg.robot_radius,
                })
            })
            .collect();
        if self.cfg.kind == TaskKind::Arena {
            let w = self.cfg.arena_half_width;
            out.push(Barrier::Wall(WallBarrier::new([1.0, 0.0], w)));
            out.push(Barrier::Wall(WallBarrier::new([-1.0, 0.0], w)));
            out.push(Barrier::Wall(WallBarrier::new([0.0, 1.0], w)));
            out.push(Barrier::Wall(WallBarrier::new([0.0, -1.0], w)));
        }
        out
    }

    /// Minimum barrier value at the current state (+inf with no barriers).
    pub fn h_min(&self) -> f64 {
        self.barriers()
            .iter()
            .map(|b| h_value(&self.state, b, 0.0))
            .fold(f64::INFINITY, f64::min)
    }

    /// Execute one control step of the true plant.
    pub fn step(&mut self, u: [f64; 2]) -> StepOutcome {
        let control = Control::from_array(self.cfg.robot, u);
        let wind = self.cfg.wind;
        let t0 = self.t;
        let params = self.true_params;
        self.state = integrate(&self.state, self.cfg.dt, |s, tau| {
            true_plant_deriv(s, &control, &params, wind_at(&wind, t0 + tau))
        });

        // hazards move linearly and reflect off the region boundary
        let bound = self.half_extent() - self.cfg.hazard_radius;
        for h in &mut self.hazards {
            for ax in 0..2 {
                h.pos[ax] += h.vel[ax] * self.cfg.dt;
                if h.pos[ax] > bound {
                    h.pos[ax] = 2.0 * bound - h.pos[ax];
                    h.vel[ax] = -h.vel[ax];
                } else if h.pos[ax] < -bound {
                    h.pos[ax] = -2.0 * bound - h.pos[ax];
                    h.vel[ax] = -h.vel[ax];
                }
            }
        }

        self.t += self.cfg.dt;
        self.step_count += 1;

        let h_min = self.h_min();
        let cost = if h_min < 0.0 { 1.0 } else { 0.0 };
        debug_assert!((cost == 1.0) == (h_min < 0.0));

        let new_dist = self.goal_distance();
        let mut reward = self.prev_goal_dist - new_dist;
        let mut goal_reached = false;
        let mut commute_time = None;
        if new_dist <= self.cfg.goal_radius {
            reward += 1.0;
            goal_reached = true;
            match self.cfg.kind {
                TaskKind::Goal => {
                    let robot = [self.state.x_p, self.state.y_p];
                    let hazards = self.hazards.clone();
                    if let Some(g) = self.sample_goal_pos(&hazards, robot) {
                        self.goal = g;
                    }
                }
                TaskKind::Arena => {
                    commute_time = Some(self.t - self.trip_start);
                    self.trip_start = self.t;
                    self.active_endpoint = 1 - self.active_endpoint;
                    self.goal = self.cfg.endpoints()[self.active_endpoint];
                }
            }
        }
        self.prev_goal_dist = self.goal_distance();

        let done = self.step_count >= self.cfg.episode_length;
        StepOutcome {
            obs: self.obs(),
            reward,
            cost,
            done,
            info: StepInfo { h_min, goal_reached, commute_time },
        }
    }

    /// Direct state observation with compact exact features: pose (yaw as
    /// sin/cos), body velocities, then goal and hazard geometry rotated
    /// into the robot body frame (egocentric, like the benchmark's
    /// sensors). Fixed constants scale everything roughly into [-1, 1] for
    /// the tanh networks.
    pub fn obs(&self) -> Vec<f64> {
        const POS_SCALE: f64 = 1.0 / 3.0;
        const VEL_SCALE: f64 = 1.0 / 2.0;
        let s = &self.state;
        let (st, ct) = s.theta_p.sin_cos();
        let to_body = |v: [f64; 2]| [ct * v[0] + st * v[1], -st * v[0] + ct * v[1]];

        let mut o = Vec::with_capacity(OBS_DIM);
        o.push(s.x_p * POS_SCALE);
        o.push(s.y_p * POS_SCALE);
        o.push(wrap_angle(s.theta_p).sin());
        o.push(wrap_angle(s.theta_p).cos());
        o.push(s.v_x * VEL_SCALE);
        o.push(s.v_y * VEL_SCALE);
        o.push(s.omega * VEL_SCALE);
        let gb = to_body([self.goal[0] - s.x_p, self.goal[1] - s.y_p]);
        o.push(gb[0] * POS_SCALE);
        o.push(gb[1] * POS_SCALE);

        // robot world-frame velocity for relative hazard velocities
        let wv = [s.v_x * ct - s.v_y * st, s.v_x * st + s.v_y * ct];

        let mut order: Vec<usize> = (0..self.hazards.len()).collect();
        order.sort_by(|&a, &b| {
            let da = dist2(self.hazards[a].pos, [s.x_p, s.y_p]);
            let db = dist2(self.hazards[b].pos, [s.x_p, s.y_p]);
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        });
        for slot in 0..OBS_HAZARD_SLOTS {
            if let Some(&i) = order.get(slot) {
                let h = &self.hazards[i];
                let rp = to_body([h.pos[0] - s.x_p, h.pos[1] - s.y_p]);
                let rv = to_body([h.vel[0] - wv[0], h.vel[1] - wv[1]]);
                o.push(rp[0] * POS_SCALE);
                o.push(rp[1] * POS_SCALE);
                o.push(rv[0] * VEL_SCALE);
                o.push(rv[1] * VEL_SCALE);
            } else {
                o.extend_from_slice(&[0.0, 0.0, 0.0, 0.0]);
            }
        }
        debug_assert_eq!(o.len(), OBS_DIM);
        o
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_goal_cfg() -> TaskConfig {
        TaskConfig {
            wind: WindSpec::none(),
            mismatch_factor: 1.0,
            ..TaskConfig::goal1(RobotKind::Point)
        }
    }

    #[test]
    fn zero_hazards_always_resets_with_infinite_clearance() {
        let cfg = TaskConfig { n_hazards: 0, ..quiet_goal_cfg() };
        let (env, _) = Env::new(cfg, 0).unwrap();
        assert_eq!(env.h_min(), f64::INFINITY);
    }

    #[test]
    fn fixed_seed_reproduces_layout() {
        let cfg = TaskConfig::goal1(RobotKind::Point);
        let (a, oa) = Env::new(cfg, 42).unwrap();
        let (b, ob) = Env::new(cfg, 42).unwrap();
        assert_eq!(oa, ob);
        assert_eq!(a.state, b.state);
        assert_eq!(a.hazards, b.hazards);
        assert_eq!(a.goal_pos(), b.goal_pos());
    }

    #[test]
    fn sampled_layouts_start_strictly_safe() {
        let cfg = TaskConfig::goal1(RobotKind::Point);
        for seed in 0..10_000u64 {
            let (env, _) = Env::new(cfg, seed).unwrap();
            assert!(env.h_min() > 0.0, "seed {seed}: h0 = {}", env.h_min());
        }
    }

    #[test]
    fn stationary_robot_zero_control_yields_no_reward_or_cost() {
        let cfg = TaskConfig { n_hazards: 0, ..quiet_goal_cfg() };
        let (mut env, _) = Env::new(cfg, 3).unwrap();
        let out = env.step([0.0, 0.0]);
        assert!(out.reward.abs() < 1e-12);
        assert_eq!(out.cost, 0.0);
        assert!(!out.info.goal_reached);
    }

    #[test]
    fn robot_inside_hazard_pays_unit_cost() {
        let cfg = quiet_goal_cfg();
        let (mut env, _) = Env::new(cfg, 4).unwrap();
        // teleport into the first hazard
        let h = env.hazards[0];
        env.state.x_p = h.pos[0];
        env.state.y_p = h.pos[1] + 0.1;
        let out = env.step([0.0, 0.0]);
        assert_eq!(out.cost, 1.0);
        assert!(out.info.h_min < 0.0);
    }

    #[test]
    fn cost_indicator_matches_h_min_sign_along_rollout() {
        let cfg = TaskConfig::goal1(RobotKind::Point);
        let (mut env, _) = Env::new(cfg, 5).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..400 {
            let u = [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)];
            let out = env.step(u);
            assert_eq!(out.cost == 1.0, out.info.h_min < 0.0);
        }
    }

    #[test]
    fn hazard_propagation_linear_between_bounces() {
        let cfg = TaskConfig { hazard_speed: 0.5, ..quiet_goal_cfg() };
        let (mut env, _) = Env::new(cfg, 7).unwrap();
        // pick a hazard and ensure it will not bounce during the window
        env.hazards[0].pos = [0.0, 0.0];
        env.hazards[0].vel = [0.3, -0.4];
        let p0 = env.hazards[0].pos;
        let v = env.hazards[0].vel;
        for k in 1..=50 {
            env.step([0.0, 0.0]);
            let t = k as f64 * env.cfg.dt;
            let h = &env.hazards[0];
            assert!((h.pos[0] - (p0[0] + v[0] * t)).abs() < 1e-12);
            assert!((h.pos[1] - (p0[1] + v[1] * t)).abs() < 1e-12);
        }
    }

    #[test]
    fn hazards_stay_inside_region_with_bouncing() {
        let cfg = TaskConfig { hazard_speed: 1.5, ..TaskConfig::goal1(RobotKind::Point) };
        let (mut env, _) = Env::new(cfg, 8).unwrap();
        let bound = cfg.region_half - cfg.hazard_radius + 1e-9;
        for _ in 0..2000 {
            env.step([0.0, 0.0]);
            for h in &env.hazards {
                assert!(h.pos[0].abs() <= bound && h.pos[1].abs() <= bound);
            }
        }
    }

    #[test]
    fn speed_norm_non_increasing_without_control_or_wind() {
        for robot in [RobotKind::Point, RobotKind::Car] {
            let cfg = TaskConfig {
                wind: WindSpec::none(),
                n_hazards: 0,
                ..TaskConfig::goal1(robot)
            };
            let (mut env, _) = Env::new(cfg, 9).unwrap();
            env.state.v_x = 1.5;
            env.state.v_y = 0.8;
            env.state.omega = 1.0;
            let mut prev = (env.state.v_x.powi(2) + env.state.v_y.powi(2)).sqrt();
            for _ in 0..300 {
                env.step([0.0, 0.0]);
                let now = (env.state.v_x.powi(2) + env.state.v_y.powi(2)).sqrt();
                assert!(now <= prev + 1e-12, "{robot:?}: speed grew {prev} -> {now}");
                prev = now;
            }
        }
    }

    #[test]
    fn goal_reach_pays_bonus_and_resamples() {
        let cfg = quiet_goal_cfg();
        let (mut env, _) = Env::new(cfg, 10).unwrap();
        let goal = env.goal_pos();
        // teleport next to the goal, heading at it
        env.state.x_p = goal[0] - 0.25;
        env.state.y_p = goal[1];
        env.state.theta_p = 0.0;
        env.state.v_x = 1.0;
        env.prev_goal_dist = env.goal_distance();
        let mut reached = false;
        for _ in 0..50 {
            let out = env.step([2.0, 0.0]);
            if out.info.goal_reached {
                assert!(out.reward > 0.9, "bonus missing: {}", out.reward);
                reached = true;
                break;
            }
        }
        assert!(reached);
        assert!(dist2(env.goal_pos(), goal) > 1e-6, "goal did not move");
    }

    #[test]
    fn arena_trip_flips_endpoint_and_records_commute_time() {
        // Scripted straight-line controller with the hazard removed; the
        // closed-form first-order speed response gives the expected trip
        // time (distance - goal radius)/v_ss + time constant.
        let cfg = TaskConfig {
            n_hazards: 0,
            wind: WindSpec::none(),
            mismatch_factor: 1.0,
            episode_length: 4000,
            ..TaskConfig::arena(RobotKind::Point)
        };
        let (mut env, _) = Env::new(cfg, 11).unwrap();
        let [a, b] = cfg.endpoints();
        let dist = (dist2(a, b)).sqrt();
        let params = *env.nominal_params();
        let c_v = 1.0;
        let v_ss = params.k_v1 * c_v;
        let expected = (dist - cfg.goal_radius) / v_ss + 1.0 / params.k_v2;

        let mut commute = None;
        for _ in 0..4000 {
            let bearing = (env.goal_pos()[1] - env.state.y_p)
                .atan2(env.goal_pos()[0] - env.state.x_p);
            let err = wrap_angle(bearing - env.state.theta_p);
            let out = env.step([c_v, (2.0 * err).clamp(-2.0, 2.0)]);
            if let Some(t) = out.info.commute_time {
                commute = Some(t);
                break;
            }
        }
        let commute = commute.expect("never completed the trip");
        assert!(
            (commute - expected).abs() <= 0.1 * expected,
            "commute {commute} vs expected {expected}"
        );
        // endpoint flipped: new goal is endpoint 0
        assert_eq!(env.goal_pos(), cfg.endpoints()[0]);
    }

    #[test]
    fn observation_layout_and_padding() {
        let cfg = TaskConfig { n_hazards: 2, ..quiet_goal_cfg() };
        let (env, obs) = Env::new(cfg, 12).unwrap();
        assert_eq!(obs.len(), OBS_DIM);
        // two hazard slots are populated, two padded with zeros
        for k in 0..4 {
            assert_eq!(obs[7 + 2 + 2 * 4 + k], 0.0);
            assert_eq!(obs[7 + 2 + 3 * 4 + k], 0.0);
        }
        // nearest hazard comes first
        let d0 = obs[9].powi(2) + obs[10].powi(2);
        let d1 = obs[13].powi(2) + obs[14].powi(2);
        assert!(d0 <= d1);
        let _ = env;
    }

    #[test]
    fn arena_has_wall_barriers() {
        let cfg = TaskConfig::arena(RobotKind::Car);
        let (env, _) = Env::new(cfg, 13).unwrap();
        let walls = env
            .barriers()
            .iter()
            .filter(|b| matches!(b, Barrier::Wall(_)))
            .count();
        assert_eq!(walls, 4);
        // robot inside the arena: every wall barrier positive
        for b in env.barriers() {
            if let Barrier::Wall(_) = b {
                assert!(h_value(&env.state, &b, 0.0) > 0.0);
            }
        }
    }
}
