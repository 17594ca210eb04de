//! Run configuration: a flat dotted-key text format, every key with a
//! documented default.

use crate::cbf::RobustnessMode;
use crate::dynamics::RobotKind;
use crate::env::{default_wind, TaskConfig, TaskKind};
use crate::rl::PpoParams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: invalid value `{value}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
}

/// Which filter components run during training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterMode {
    None,
    Cbf,
    DobCbf,
    ResCbf,
    ResDobCbf,
}

impl FilterMode {
    pub const ALL: [FilterMode; 5] = [
        FilterMode::None,
        FilterMode::Cbf,
        FilterMode::DobCbf,
        FilterMode::ResCbf,
        FilterMode::ResDobCbf,
    ];

    pub fn flags(self) -> ModeFlags {
        match self {
            FilterMode::None => ModeFlags { cbf: false, dob: false, residual: false },
            FilterMode::Cbf => ModeFlags { cbf: true, dob: false, residual: false },
            FilterMode::DobCbf => ModeFlags { cbf: true, dob: true, residual: false },
            FilterMode::ResCbf => ModeFlags { cbf: true, dob: false, residual: true },
            FilterMode::ResDobCbf => ModeFlags { cbf: true, dob: true, residual: true },
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FilterMode::None => "none",
            FilterMode::Cbf => "cbf",
            FilterMode::DobCbf => "dob_cbf",
            FilterMode::ResCbf => "res_cbf",
            FilterMode::ResDobCbf => "res_dob_cbf",
        };
        f.write_str(s)
    }
}

impl FromStr for FilterMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(FilterMode::None),
            "cbf" => Ok(FilterMode::Cbf),
            "dob_cbf" => Ok(FilterMode::DobCbf),
            "res_cbf" => Ok(FilterMode::ResCbf),
            "res_dob_cbf" => Ok(FilterMode::ResDobCbf),
            other => Err(format!(
                "unknown mode `{other}` (expected none|cbf|dob_cbf|res_cbf|res_dob_cbf)"
            )),
        }
    }
}

/// Resolved component switches for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeFlags {
    pub cbf: bool,
    pub dob: bool,
    pub residual: bool,
}

impl ModeFlags {
    /// Canonical mode name for a flag combination.
    pub fn mode_name(self) -> &'static str {
        match (self.cbf, self.dob, self.residual) {
            (false, _, _) => "none",
            (true, false, false) => "cbf",
            (true, true, false) => "dob_cbf",
            (true, false, true) => "res_cbf",
            (true, true, true) => "res_dob_cbf",
        }
    }
}

/// RL hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RlConfig {
    pub iterations: u32,
    pub episodes_per_iter: u32,
    pub lr: f64,
    pub clip: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub lambda_init: f64,
    pub lambda_lr: f64,
    pub log_std_init: f64,
    pub hidden: Vec<usize>,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            iterations: 150,
            episodes_per_iter: 4,
            lr: 1e-3,
            clip: 0.2,
            epochs: 10,
            minibatch: 128,
            gamma: 0.99,
            gae_lambda: 0.97,
            lambda_init: 1.0,
            lambda_lr: 0.2,
            log_std_init: -0.5,
            hidden: vec![64, 64],
        }
    }
}

impl RlConfig {
    pub fn ppo_params(&self) -> PpoParams {
        PpoParams {
            epochs: self.epochs,
            clip: self.clip,
            lr: self.lr,
            minibatch: self.minibatch,
            lambda_lr: self.lambda_lr,
        }
    }
}

/// Everything one training or evaluation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub filter_mode: FilterMode,
    pub beta1: f64,
    pub beta2: f64,
    /// Disturbance handling of the barrier constraint in DOB modes.
    pub robustness: RobustnessMode,
    pub slack_penalty: f64,
    pub dob_a: f64,
    pub dob_t_sample: f64,
    /// None means calibrate empirically at run start.
    pub dob_error_bound: Option<f64>,
    pub residual_lr: f64,
    pub residual_hidden: Vec<usize>,
    pub rl: RlConfig,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskConfig::goal1(RobotKind::Point),
            filter_mode: FilterMode::ResDobCbf,
            beta1: 2.0,
            beta2: 2.0,
            robustness: RobustnessMode::DobPlusBound,
            slack_penalty: 1e6,
            dob_a: 10.0,
            dob_t_sample: 0.02,
            dob_error_bound: None,
            residual_lr: 2e-3,
            residual_hidden: vec![32, 32],
            rl: RlConfig::default(),
            seed: 0,
            out: None,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_usize_list(key: &str, value: &str) -> Result<Vec<usize>, ConfigError> {
    value
        .split(',')
        .map(|p| parse_num::<usize>(key, p.trim()))
        .collect()
}

impl RunConfig {
    /// Parse a flat `key = value` config over the defaults. Lines starting
    /// with `#` and blank lines are ignored.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut wind_magnitude_explicit = false;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError::Malformed { line: idx + 1, text: line.into() })?;
            let key = key.trim();
            let value = value.trim();
            if key == "task.wind_magnitude" {
                wind_magnitude_explicit = true;
            }
            cfg.apply(key, value)?;
        }
        if !wind_magnitude_explicit {
            cfg.task.wind = crate::disturbance::WindSpec {
                magnitude: default_wind(cfg.task.robot).magnitude,
                ..cfg.task.wind
            };
        }
        Ok(cfg)
    }

    /// Apply one `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: reason.into(),
        };
        match key {
            "task.kind" => {
                self.task.kind = match value {
                    "goal" => TaskKind::Goal,
                    "arena" => TaskKind::Arena,
                    _ => return Err(bad("expected goal|arena")),
                }
            }
            "task.robot" => {
                self.task.robot = match value {
                    "point" => RobotKind::Point,
                    "car" => RobotKind::Car,
                    _ => return Err(bad("expected point|car")),
                }
            }
            "task.n_hazards" => self.task.n_hazards = parse_num(key, value)?,
            "task.hazard_radius" => self.task.hazard_radius = parse_num(key, value)?,
            "task.hazard_speed" => self.task.hazard_speed = parse_num(key, value)?,
            "task.goal_radius" => self.task.goal_radius = parse_num(key, value)?,
            "task.region_half" => self.task.region_half = parse_num(key, value)?,
            "task.arena_half_width" => self.task.arena_half_width = parse_num(key, value)?,
            "task.episode_length" => self.task.episode_length = parse_num(key, value)?,
            "task.target_cost" => self.task.target_cost = parse_num(key, value)?,
            "task.wind_magnitude" => self.task.wind.magnitude = parse_num(key, value)?,
            "task.wind_rate" => self.task.wind.angular_rate = parse_num(key, value)?,
            "task.wind_phase" => self.task.wind.phase = parse_num(key, value)?,
            "task.mismatch_factor" => self.task.mismatch_factor = parse_num(key, value)?,
            "task.robot_radius" => self.task.robot_radius = parse_num(key, value)?,
            "task.dt" => self.task.dt = parse_num(key, value)?,
            "filter.mode" => {
                self.filter_mode = value.parse().map_err(|e: String| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    reason: e,
                })?
            }
            "cbf.beta1" => self.beta1 = parse_num(key, value)?,
            "cbf.beta2" => self.beta2 = parse_num(key, value)?,
            "cbf.robustness" => {
                self.robustness = match value {
                    "dob" => RobustnessMode::Dob,
                    "dob_plus_bound" => RobustnessMode::DobPlusBound,
                    _ => return Err(bad("expected dob|dob_plus_bound")),
                }
            }
            "qp.slack_penalty" => self.slack_penalty = parse_num(key, value)?,
            "dob.a" => self.dob_a = parse_num(key, value)?,
            "dob.t_sample" => self.dob_t_sample = parse_num(key, value)?,
            "dob.error_bound" => {
                self.dob_error_bound = if value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "residual.learning_rate" => self.residual_lr = parse_num(key, value)?,
            "residual.hidden" => self.residual_hidden = parse_usize_list(key, value)?,
            "rl.iterations" => self.rl.iterations = parse_num(key, value)?,
            "rl.episodes_per_iter" => self.rl.episodes_per_iter = parse_num(key, value)?,
            "rl.lr" => self.rl.lr = parse_num(key, value)?,
            "rl.clip" => self.rl.clip = parse_num(key, value)?,
            "rl.epochs" => self.rl.epochs = parse_num(key, value)?,
            "rl.minibatch" => self.rl.minibatch = parse_num(key, value)?,
            "rl.gamma" => self.rl.gamma = parse_num(key, value)?,
            "rl.gae_lambda" => self.rl.gae_lambda = parse_num(key, value)?,
            "rl.lambda_init" => self.rl.lambda_init = parse_num(key, value)?,
            "rl.lambda_lr" => self.rl.lambda_lr = parse_num(key, value)?,
            "rl.log_std_init" => self.rl.log_std_init = parse_num(key, value)?,
            "rl.hidden" => self.rl.hidden = parse_usize_list(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    /// Render the full configuration as parseable text, one documented key
    /// per line. `RunConfig::render(&RunConfig::default())` is the
    /// generated configuration reference.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut kv = |doc: &str, key: &str, value: String| {
            s.push_str(&format!("# {doc}\n{key} = {value}\n"));
        };
        kv(
            "task layout: goal (random goals among hazards) or arena (two-endpoint commute)",
            "task.kind",
            match self.task.kind {
                TaskKind::Goal => "goal".into(),
                TaskKind::Arena => "arena".into(),
            },
        );
        kv("robot model: point or car", "task.robot", match self.task.robot {
            RobotKind::Point => "point".into(),
            RobotKind::Car => "car".into(),
        });
        kv("number of circular hazards", "task.n_hazards", self.task.n_hazards.to_string());
        kv("hazard radius (m)", "task.hazard_radius", self.task.hazard_radius.to_string());
        kv("hazard speed (m/s)", "task.hazard_speed", self.task.hazard_speed.to_string());
        kv("goal capture radius (m)", "task.goal_radius", self.task.goal_radius.to_string());
        kv("goal-task region half-width (m)", "task.region_half", self.task.region_half.to_string());
        kv("arena half-width (m)", "task.arena_half_width", self.task.arena_half_width.to_string());
        kv("steps per episode", "task.episode_length", self.task.episode_length.to_string());
        kv("allowed violation steps per episode", "task.target_cost", self.task.target_cost.to_string());
        kv("wind acceleration magnitude (m/s^2)", "task.wind_magnitude", self.task.wind.magnitude.to_string());
        kv("wind direction rotation rate (rad/s); 10*pi approximates five turns per second", "task.wind_rate", self.task.wind.angular_rate.to_string());
        kv("initial wind direction (rad)", "task.wind_phase", self.task.wind.phase.to_string());
        kv("true-plant gain scale (1.5 = 50% internal model error)", "task.mismatch_factor", self.task.mismatch_factor.to_string());
        kv("robot radius (m)", "task.robot_radius", self.task.robot_radius.to_string());
        kv("simulation step (s)", "task.dt", self.task.dt.to_string());
        kv("safety filter variant: none|cbf|dob_cbf|res_cbf|res_dob_cbf", "filter.mode", self.filter_mode.to_string());
        kv("first class-K coefficient", "cbf.beta1", self.beta1.to_string());
        kv("second class-K coefficient", "cbf.beta2", self.beta2.to_string());
        kv("barrier disturbance handling in DOB modes: dob|dob_plus_bound", "cbf.robustness", match self.robustness {
            RobustnessMode::None => "dob".into(),
            RobustnessMode::Dob => "dob".into(),
            RobustnessMode::DobPlusBound => "dob_plus_bound".into(),
        });
        kv("quadratic penalty weight on the shared infeasibility slack", "qp.slack_penalty", self.slack_penalty.to_string());
        kv("observer gain (1/s)", "dob.a", self.dob_a.to_string());
        kv("estimation sampling time (s)", "dob.t_sample", self.dob_t_sample.to_string());
        kv("estimation error bound, or `auto` to calibrate at run start", "dob.error_bound", self.dob_error_bound.map_or_else(|| "auto".into(), |v| v.to_string()));
        kv("residual SGD learning rate", "residual.learning_rate", self.residual_lr.to_string());
        kv("residual net hidden layer sizes", "residual.hidden", join_usizes(&self.residual_hidden));
        kv("training iterations", "rl.iterations", self.rl.iterations.to_string());
        kv("episodes collected per iteration", "rl.episodes_per_iter", self.rl.episodes_per_iter.to_string());
        kv("Adam learning rate", "rl.lr", self.rl.lr.to_string());
        kv("PPO clip parameter", "rl.clip", self.rl.clip.to_string());
        kv("PPO epochs per update", "rl.epochs", self.rl.epochs.to_string());
        kv("minibatch size", "rl.minibatch", self.rl.minibatch.to_string());
        kv("discount factor", "rl.gamma", self.rl.gamma.to_string());
        kv("GAE lambda", "rl.gae_lambda", self.rl.gae_lambda.to_string());
        kv("initial Lagrange multiplier", "rl.lambda_init", self.rl.lambda_init.to_string());
        kv("multiplier step size", "rl.lambda_lr", self.rl.lambda_lr.to_string());
        kv("initial policy log standard deviation", "rl.log_std_init", self.rl.log_std_init.to_string());
        kv("policy/value net hidden layer sizes", "rl.hidden", join_usizes(&self.rl.hidden));
        kv("master seed (splits into layout/policy/action/shuffle streams)", "seed", self.seed.to_string());
        if let Some(out) = &self.out {
            kv("output directory", "out", out.display().to_string());
        } else {
            s.push_str("# output directory (unset: no files written)\n# out = runs/example\n");
        }
        s
    }
}

fn join_usizes(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_render_and_parse() {
        let cfg = RunConfig::default();
        let text = cfg.render();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn parse_overrides_and_comments() {
        let text = "\n# comment\nfilter.mode = dob_cbf\nseed = 7\ntask.robot = car\nrl.hidden = 32,32\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.filter_mode, FilterMode::DobCbf);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.task.robot, RobotKind::Car);
        assert_eq!(cfg.rl.hidden, vec![32, 32]);
        // wind defaults follow the robot when not set explicitly
        assert_eq!(cfg.task.wind.magnitude, 2.5);
    }

    #[test]
    fn explicit_wind_survives_robot_default() {
        let text = "task.robot = car\ntask.wind_magnitude = 0.1\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.task.wind.magnitude, 0.1);
    }

    #[test]
    fn unknown_key_and_malformed_line_are_errors() {
        assert!(matches!(
            RunConfig::parse("nope.key = 3"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse("just a line"),
            Err(ConfigError::Malformed { .. })
        ));
        assert!(matches!(
            RunConfig::parse("seed = abc"),
            Err(ConfigError::BadValue { .. })
        ));
    }

    #[test]
    fn mode_flags_disable_components() {
        assert_eq!(FilterMode::None.flags(), ModeFlags { cbf: false, dob: false, residual: false });
        assert_eq!(FilterMode::ResDobCbf.flags(), ModeFlags { cbf: true, dob: true, residual: true });
        assert_eq!(FilterMode::DobCbf.flags().mode_name(), "dob_cbf");
    }

    #[test]
    fn error_bound_auto_and_numeric() {
        let cfg = RunConfig::parse("dob.error_bound = auto").unwrap();
        assert_eq!(cfg.dob_error_bound, None);
        let cfg = RunConfig::parse("dob.error_bound = 0.25").unwrap();
        assert_eq!(cfg.dob_error_bound, Some(0.25));
    }
}
