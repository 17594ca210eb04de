//! Empirical estimation-error-bound calibration: run the observer against
//! the true simulator under a random policy and report percentiles of its
//! error. The harness owns the simulator, so the lumped disturbance is
//! directly computable here (and only here).
//!
//! Calibration mirrors the mode it serves: when residual learning is part
//! of the filter, a fresh residual model trains online during the rollout
//! and the observer is measured against the disturbance net of the
//! residual prediction, over the second half of the rollout. Calibrating a
//! residual-assisted observer against the full lumped signal would inflate
//! the bound by the entire parametric model error and freeze the filter.

use super::config::RunConfig;
use super::HarnessError;
use crate::dob::DobState;
use crate::dynamics::{nominal_deriv, Control, ModelParams, StateDeriv, STATE_DIM};
use crate::env::{control_box, Env};
use crate::residual::ResidualModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Calibration rollout results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub steps: u32,
    /// Whether a residual model was learning during the rollout.
    pub with_residual: bool,
    /// 99th percentile of the estimation error norm after warmup.
    pub suggested_bound: f64,
    pub mean_error: f64,
    pub max_error: f64,
    /// Largest estimate magnitude seen on the position channels, which
    /// carry no physical disturbance; stays at the discretization-leakage
    /// level (second order in the step size).
    pub max_position_estimate: f64,
}

/// Default rollout length for automatic calibration at run start. Residual
/// modes need enough steps for the online model to settle before the error
/// percentile means anything.
pub fn default_calibration_steps(cfg: &RunConfig) -> u32 {
    if cfg.filter_mode.flags().residual {
        6000
    } else {
        500
    }
}

/// Run a `steps`-long random-policy rollout with the observer and measure
/// its error against the true lumped disturbance (net of the residual
/// prediction when the serving mode learns one).
pub fn calibrate_dob(cfg: &RunConfig, steps: u32) -> Result<CalibrationReport, HarnessError> {
    let calib_seed = cfg.seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(0xC0FFEE);
    let (mut env, _) = Env::new(cfg.task, calib_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(calib_seed);
    rng.set_stream(7);
    let bx = control_box(cfg.task.robot);
    let params = ModelParams::defaults_for(cfg.task.robot);
    let mut dob = DobState::new(env.state, cfg.dob_a, cfg.dob_t_sample, 0.0);

    let with_residual = cfg.filter_mode.flags().residual;
    let mut residual = if with_residual {
        let mut res_rng = ChaCha8Rng::seed_from_u64(calib_seed);
        res_rng.set_stream(8);
        Some(ResidualModel::new(&cfg.residual_hidden, cfg.residual_lr, &mut res_rng))
    } else {
        None
    };

    // measure over the settled part of the rollout
    let warmup_steps = if with_residual { steps / 2 } else { (0.2 / cfg.task.dt) as u32 };
    let mut errors: Vec<f64> = Vec::new();
    let mut max_pos = 0.0f64;

    for step in 0..steps {
        let u = [
            rng.gen_range(bx.lo[0]..bx.hi[0]),
            rng.gen_range(bx.lo[1]..bx.hi[1]),
        ];
        let control = Control::from_array(cfg.task.robot, u);
        if dob.since_update >= cfg.dob_t_sample - 1e-12 {
            dob.pc_update(&env.state);
        }
        let lumped = env.lumped_disturbance(&control);
        let res_pred = residual
            .as_ref()
            .map(|r| r.predict(&env.state, &control).to_array())
            .unwrap_or([0.0; STATE_DIM]);
        if step >= warmup_steps {
            let mut err2 = 0.0;
            for i in 0..STATE_DIM {
                let target = lumped[i] - res_pred[i];
                err2 += (dob.d_hat[i] - target) * (dob.d_hat[i] - target);
            }
            errors.push(err2.sqrt());
            max_pos = max_pos.max(dob.d_hat[0].abs()).max(dob.d_hat[1].abs());
        }

        let x_before = env.state;
        env.step(u);
        let res_ref = residual.as_ref();
        {
            // predictor uses the same model view the filter would see
            let model = |s: &crate::dynamics::State| {
                let mut d = nominal_deriv(s, &control, &params).to_array();
                if let Some(r) = res_ref {
                    let rp = r.predict(s, &control).to_array();
                    for i in 0..STATE_DIM {
                        d[i] += rp[i];
                    }
                }
                StateDeriv::from_array(d)
            };
            dob.predictor_step(&x_before, model, cfg.task.dt);
        }
        if let Some(res) = &mut residual {
            let a = x_before.to_array();
            let b = env.state.to_array();
            let mut fd = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                fd[i] = (b[i] - a[i]) / cfg.task.dt;
            }
            let nominal = nominal_deriv(&x_before, &control, &params);
            res.update(&x_before, &control, &StateDeriv::from_array(fd), &nominal);
        }
    }

    errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = errors.len().max(1);
    let p99 = errors.get(((n as f64 * 0.99) as usize).min(n.saturating_sub(1))).copied().unwrap_or(0.0);
    let mean = errors.iter().sum::<f64>() / n as f64;
    let max = errors.last().copied().unwrap_or(0.0);
    Ok(CalibrationReport {
        steps,
        with_residual,
        suggested_bound: p99,
        mean_error: mean,
        max_error: max,
        max_position_estimate: max_pos,
    })
}
