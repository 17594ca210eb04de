//! Barrier functions (moving circular obstacles, arena walls) and the
//! robust second-order constraint construction.
//!
//! Position barriers have relative degree two under both robot models, so
//! the constraint is built from the recursion `phi_0 = h`,
//! `phi_1 = h_dot + beta1 h`, enforced as an inequality affine in the
//! control. The drift and input matrix can include the learned residual
//! corrections, and the right-hand side carries the disturbance estimate
//! and, optionally, a robustness margin proportional to the configured
//! estimation error bound.

use crate::dynamics::{
    nominal_drift, nominal_input_matrix, true_drift, InputMatrix, ModelParams, RobotKind, State,
    STATE_DIM,
};
use crate::residual::ResidualModel;
use serde::{Deserialize, Serialize};

/// Distance below which the circle gradient is considered degenerate.
const DEGENERATE_DIST: f64 = 1e-9;
/// Right-hand side of the infeasible sentinel constraint.
const SENTINEL_RHS: f64 = -1e30;

/// Circular no-go region moving at constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleObstacle {
    pub center: [f64; 2],
    pub velocity: [f64; 2],
    /// Obstacle radius (m).
    pub r_i: f64,
    /// Robot radius (m).
    pub r_p: f64,
}

/// Half-plane keep-in constraint; `normal` points into the safe side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WallBarrier {
    normal: [f64; 2],
    pub offset: f64,
}

impl WallBarrier {
    /// Builds the wall, normalizing `normal` to unit length.
    pub fn new(normal: [f64; 2], offset: f64) -> Self {
        let n = (normal[0] * normal[0] + normal[1] * normal[1]).sqrt();
        assert!(n > 0.0, "wall normal must be nonzero");
        Self { normal: [normal[0] / n, normal[1] / n], offset }
    }

    pub fn normal(&self) -> [f64; 2] {
        self.normal
    }
}

/// Either barrier kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Barrier {
    Circle(CircleObstacle),
    Wall(WallBarrier),
}

/// One affine-in-u inequality `coeff . u + rhs >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierConstraint {
    pub coeff: Vec<f64>,
    pub rhs: f64,
}

/// How the constraint accounts for the unknown disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobustnessMode {
    /// Pure model-based constraint.
    None,
    /// Add the disturbance-estimate term.
    Dob,
    /// Disturbance estimate plus the error-bound margin.
    DobPlusBound,
}

/// Class-K coefficients and robustness selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfConfig {
    pub beta1: f64,
    pub beta2: f64,
    /// Only 2 is supported; stored to make the contract explicit.
    pub relative_degree: u32,
    pub robustness: RobustnessMode,
}

impl Default for CbfConfig {
    fn default() -> Self {
        Self { beta1: 2.0, beta2: 2.0, relative_degree: 2, robustness: RobustnessMode::None }
    }
}

impl CbfConfig {
    pub fn is_valid(&self) -> bool {
        self.beta1 > 0.0 && self.beta2 > 0.0 && self.relative_degree == 2
    }
}

/// Which plant realization supplies drift and input matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantModel {
    /// The nominal kinematic model (what the controller believes).
    Nominal,
    /// The simulator's true drift, used by oracle-mode verification.
    True,
}

/// Immutable view of the model the filter reasons with: nominal (or true)
/// dynamics plus an optional residual-correction snapshot.
#[derive(Debug, Clone, Copy)]
pub struct ModelSnapshot<'a> {
    pub robot: RobotKind,
    pub params: ModelParams,
    pub plant: PlantModel,
    pub residual: Option<&'a ResidualModel>,
}

impl<'a> ModelSnapshot<'a> {
    pub fn nominal(robot: RobotKind, params: ModelParams, residual: Option<&'a ResidualModel>) -> Self {
        Self { robot, params, plant: PlantModel::Nominal, residual }
    }

    /// Oracle snapshot with the true plant drift and no residual.
    pub fn true_plant(robot: RobotKind, true_params: ModelParams) -> Self {
        Self { robot, params: true_params, plant: PlantModel::True, residual: None }
    }

    /// Drift vector f(x) including any residual correction.
    pub fn drift(&self, x: &State) -> [f64; STATE_DIM] {
        let mut f = match self.plant {
            PlantModel::Nominal => nominal_drift(self.robot, x, &self.params).to_array(),
            PlantModel::True => true_drift(self.robot, x, &self.params).to_array(),
        };
        if let Some(res) = self.residual {
            let df = res.f_value(x);
            for i in 0..STATE_DIM {
                f[i] += df[i];
            }
        }
        f
    }

    /// Input matrix g(x) columns including any residual correction.
    pub fn input_columns(&self, x: &State) -> InputMatrix {
        let mut g = nominal_input_matrix(self.robot, &self.params);
        if let Some(res) = self.residual {
            let dg = res.g_columns(x);
            for j in 0..2 {
                for i in 0..STATE_DIM {
                    g[j][i] += dg[j][i];
                }
            }
        }
        g
    }

    /// Gradient of `dir . (position rows of drift)` with respect to the
    /// state. The kinematic part is analytic; the residual part comes from
    /// the network's exact input gradients.
    pub fn pos_dir_grad(&self, x: &State, dir: [f64; 2]) -> [f64; STATE_DIM] {
        let (s, c) = x.theta_p.sin_cos();
        let mut out = [0.0; STATE_DIM];
        // position rows are v_x cos(theta), v_x sin(theta) for both plants
        out[2] = dir[0] * (-x.v_x * s) + dir[1] * (x.v_x * c);
        out[3] = dir[0] * c + dir[1] * s;
        if let Some(res) = self.residual {
            let rg = res.pos_drift_input_grad(x, dir);
            for i in 0..STATE_DIM {
                out[i] += rg[i];
            }
        }
        out
    }
}

/// Distance-based barrier for a circular obstacle propagated to time `t`
/// along its constant velocity.
pub fn h_circle(x: &State, obs: &CircleObstacle, t: f64) -> f64 {
    let cx = obs.center[0] + obs.velocity[0] * t;
    let cy = obs.center[1] + obs.velocity[1] * t;
    let dx = x.x_p - cx;
    let dy = x.y_p - cy;
    (dx * dx + dy * dy).sqrt() - obs.r_i - obs.r_p
}

/// Signed distance to the wall line, positive on the safe side.
pub fn h_wall(x: &State, wall: &WallBarrier) -> f64 {
    wall.normal[0] * x.x_p + wall.normal[1] * x.y_p + wall.offset
}

/// Barrier value dispatched on kind.
pub fn h_value(x: &State, barrier: &Barrier, t: f64) -> f64 {
    match barrier {
        Barrier::Circle(o) => h_circle(x, o, t),
        Barrier::Wall(w) => h_wall(x, w),
    }
}

/// Output of [`build_constraint`]: the affine constraint plus a flag for
/// the degenerate-gradient case (the constraint is then an infeasible
/// sentinel).
#[derive(Debug, Clone)]
pub struct BuiltConstraint {
    pub constraint: BarrierConstraint,
    pub degenerate: bool,
    /// Barrier value at the current state, handy for logging.
    pub h: f64,
    /// First-order barrier rate under the snapshot's drift.
    pub h_dot: f64,
}

struct BarrierGeometry {
    h: f64,
    /// Unit vector from the obstacle toward the robot (or the wall normal).
    normal: [f64; 2],
    /// Curvature of the normal field: (I - n n^T)/dist for circles, zero
    /// for walls.
    curvature: [[f64; 2]; 2],
    obstacle_velocity: [f64; 2],
    degenerate: bool,
}

fn geometry(x: &State, barrier: &Barrier, t: f64) -> BarrierGeometry {
    match barrier {
        Barrier::Circle(o) => {
            let cx = o.center[0] + o.velocity[0] * t;
            let cy = o.center[1] + o.velocity[1] * t;
            let ex = x.x_p - cx;
            let ey = x.y_p - cy;
            let dist = (ex * ex + ey * ey).sqrt();
            if dist < DEGENERATE_DIST {
                return BarrierGeometry {
                    h: -(o.r_i + o.r_p),
                    normal: [0.0, 0.0],
                    curvature: [[0.0; 2]; 2],
                    obstacle_velocity: o.velocity,
                    degenerate: true,
                };
            }
            let n = [ex / dist, ey / dist];
            let curvature = [
                [(1.0 - n[0] * n[0]) / dist, (-n[0] * n[1]) / dist],
                [(-n[1] * n[0]) / dist, (1.0 - n[1] * n[1]) / dist],
            ];
            BarrierGeometry {
                h: dist - o.r_i - o.r_p,
                normal: n,
                curvature,
                obstacle_velocity: o.velocity,
                degenerate: false,
            }
        }
        Barrier::Wall(w) => BarrierGeometry {
            h: h_wall(x, w),
            normal: w.normal,
            curvature: [[0.0; 2]; 2],
            obstacle_velocity: [0.0, 0.0],
            degenerate: false,
        },
    }
}

/// Barrier value and its rate along the snapshot's drift (including the
/// explicit obstacle-motion term). Exposed for logging and tests.
pub fn h_and_hdot(x: &State, barrier: &Barrier, snapshot: &ModelSnapshot, t: f64) -> (f64, f64) {
    let geo = geometry(x, barrier, t);
    let f = snapshot.drift(x);
    let w_rel = [f[0] - geo.obstacle_velocity[0], f[1] - geo.obstacle_velocity[1]];
    (geo.h, geo.normal[0] * w_rel[0] + geo.normal[1] * w_rel[1])
}

/// Assemble the robust second-order barrier constraint at state `x` and
/// time `t`.
///
/// With robustness off and no residual this is the plain model-based
/// second-order constraint; the `Dob` modes add the estimate term
/// `grad(h_dot) . d_hat` and, for [`RobustnessMode::DobPlusBound`], subtract
/// `|grad(h_dot)| * error_bound` so the constraint only ever tightens.
pub fn build_constraint(
    x: &State,
    barrier: &Barrier,
    snapshot: &ModelSnapshot,
    d_hat: &[f64; STATE_DIM],
    error_bound: f64,
    cfg: &CbfConfig,
    t: f64,
) -> BuiltConstraint {
    assert!(cfg.is_valid(), "invalid barrier configuration");
    let geo = geometry(x, barrier, t);
    if geo.degenerate {
        return BuiltConstraint {
            constraint: BarrierConstraint { coeff: vec![0.0, 0.0], rhs: SENTINEL_RHS },
            degenerate: true,
            h: geo.h,
            h_dot: 0.0,
        };
    }

    let f = snapshot.drift(x);
    let g = snapshot.input_columns(x);
    let n = geo.normal;
    let q = geo.curvature;

    let w = [f[0], f[1]];
    let w_rel = [w[0] - geo.obstacle_velocity[0], w[1] - geo.obstacle_velocity[1]];
    let h = geo.h;
    let h_dot = n[0] * w_rel[0] + n[1] * w_rel[1];

    // d(n . w)/dx with n held fixed
    let v6 = snapshot.pos_dir_grad(x, n);
    // full gradient of h_dot: v6 plus the curvature of the normal field
    let qw = [
        q[0][0] * w_rel[0] + q[0][1] * w_rel[1],
        q[1][0] * w_rel[0] + q[1][1] * w_rel[1],
    ];
    let mut grad_psi = v6;
    grad_psi[0] += qw[0];
    grad_psi[1] += qw[1];

    // control coefficient row: grad(h_dot) . g_j
    let mut coeff = vec![0.0; 2];
    for j in 0..2 {
        coeff[j] = (0..STATE_DIM).map(|i| grad_psi[i] * g[j][i]).sum();
    }

    // drift plus explicit obstacle-motion terms of the second derivative
    let drift_term =
        qw[0] * w_rel[0] + qw[1] * w_rel[1] + (0..STATE_DIM).map(|i| v6[i] * f[i]).sum::<f64>();

    let phi1 = h_dot + cfg.beta1 * h;
    let mut rhs = drift_term + cfg.beta1 * h_dot + cfg.beta2 * phi1;

    match cfg.robustness {
        RobustnessMode::None => {}
        RobustnessMode::Dob | RobustnessMode::DobPlusBound => {
            rhs += (0..STATE_DIM).map(|i| grad_psi[i] * d_hat[i]).sum::<f64>();
            if cfg.robustness == RobustnessMode::DobPlusBound {
                let gnorm = grad_psi.iter().map(|v| v * v).sum::<f64>().sqrt();
                rhs -= gnorm * error_bound;
            }
        }
    }

    BuiltConstraint {
        constraint: BarrierConstraint { coeff, rhs },
        degenerate: false,
        h,
        h_dot,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{Control, PointControl};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn static_obstacle(cx: f64, cy: f64, r_i: f64, r_p: f64) -> CircleObstacle {
        CircleObstacle { center: [cx, cy], velocity: [0.0, 0.0], r_i, r_p }
    }

    #[test]
    fn h_circle_boundary_is_zero() {
        let o = static_obstacle(0.0, 0.0, 1.0, 0.5);
        let x = State::from_array([1.5, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(h_circle(&x, &o, 0.0), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn h_circle_pythagoras() {
        let o = static_obstacle(0.0, 0.0, 1.0, 0.5);
        let x = State::from_array([3.0, 4.0, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(h_circle(&x, &o, 0.0), 3.5, epsilon = 1e-14);
    }

    #[test]
    fn h_circle_constant_velocity_propagation() {
        let moving = CircleObstacle { center: [0.0, 0.0], velocity: [1.0, 0.0], r_i: 0.4, r_p: 0.2 };
        let shifted = static_obstacle(2.0, 0.0, 0.4, 0.2);
        let x = State::from_array([-1.0, 0.7, 0.3, 0.0, 0.0, 0.0]);
        assert_relative_eq!(h_circle(&x, &moving, 2.0), h_circle(&x, &shifted, 0.0), epsilon = 1e-14);
    }

    #[test]
    fn h_wall_examples() {
        let wall = WallBarrier::new([1.0, 0.0], 2.1);
        let on_line = State::from_array([-2.1, 0.5, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(h_wall(&on_line, &wall), 0.0, epsilon = 1e-14);
        let origin = State::zero();
        assert_relative_eq!(h_wall(&origin, &wall), 2.1, epsilon = 1e-14);
        let outside = State::from_array([-2.2, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(h_wall(&outside, &wall), -0.1, epsilon = 1e-14);
    }

    #[test]
    fn wall_normal_is_normalized() {
        let wall = WallBarrier::new([3.0, 4.0], 1.0);
        let n = wall.normal();
        assert_relative_eq!((n[0] * n[0] + n[1] * n[1]).sqrt(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn heading_straight_at_obstacle_hand_case() {
        // Point robot one meter of clearance away, moving straight in at
        // v_x = 1: h_dot = -1 and phi_1 = beta1 - 1.
        let params = ModelParams::point_defaults();
        let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
        // distance 2.5, radii total 1.5 -> h = 1.0
        let o = static_obstacle(2.5, 0.0, 1.0, 0.5);
        let x = State::from_array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let b = Barrier::Circle(o);
        let (h, h_dot) = h_and_hdot(&x, &b, &snapshot, 0.0);
        assert_relative_eq!(h, 1.0, epsilon = 1e-12);
        assert_relative_eq!(h_dot, -1.0, epsilon = 1e-12);
        let cfg = CbfConfig::default();
        let built = build_constraint(&x, &b, &snapshot, &[0.0; 6], 0.0, &cfg, 0.0);
        assert!(!built.degenerate);
        assert_relative_eq!(built.h_dot + cfg.beta1 * built.h, cfg.beta1 - 1.0, epsilon = 1e-12);
    }

    /// Independent first-order rate: finite difference of the barrier value
    /// along the drift flow plus the explicit time dependence.
    fn numeric_hdot(x: &State, barrier: &Barrier, snapshot: &ModelSnapshot, t: f64) -> f64 {
        let eps = 1e-6;
        let f = snapshot.drift(x);
        let shift = |s: f64| {
            let mut a = x.to_array();
            for i in 0..STATE_DIM {
                a[i] += s * f[i];
            }
            State::from_array(a)
        };
        let space = (h_value(&shift(eps), barrier, t) - h_value(&shift(-eps), barrier, t)) / (2.0 * eps);
        let time = (h_value(x, barrier, t + eps) - h_value(x, barrier, t - eps)) / (2.0 * eps);
        space + time
    }

    /// Independent psi = h_dot evaluation used by the second-order oracle.
    fn psi(x: &State, barrier: &Barrier, snapshot: &ModelSnapshot, t: f64) -> f64 {
        h_and_hdot(x, barrier, snapshot, t).1
    }

    fn psi_at(x_arr: [f64; STATE_DIM], barrier: &Barrier, snapshot: &ModelSnapshot, t: f64) -> f64 {
        psi(&State::from_array(x_arr), barrier, snapshot, t)
    }

    /// Rebuild the constraint by numerically differentiating psi: the
    /// drift/time part via finite differences along f and in t, and each
    /// control coefficient via a directional difference along the g column.
    fn numeric_constraint(
        x: &State,
        barrier: &Barrier,
        snapshot: &ModelSnapshot,
        cfg: &CbfConfig,
        t: f64,
    ) -> (Vec<f64>, f64) {
        let eps = 1e-6;
        let f = snapshot.drift(x);
        let g = snapshot.input_columns(x);
        let xa = x.to_array();

        let shift_along = |dir: &[f64; STATE_DIM], s: f64| {
            let mut a = xa;
            for i in 0..STATE_DIM {
                a[i] += s * dir[i];
            }
            a
        };

        let lf_psi = (psi_at(shift_along(&f, eps), barrier, snapshot, t)
            - psi_at(shift_along(&f, -eps), barrier, snapshot, t))
            / (2.0 * eps);
        let dt_psi = (psi(x, barrier, snapshot, t + eps) - psi(x, barrier, snapshot, t - eps)) / (2.0 * eps);

        let mut coeff = vec![0.0; 2];
        for j in 0..2 {
            coeff[j] = (psi_at(shift_along(&g[j], eps), barrier, snapshot, t)
                - psi_at(shift_along(&g[j], -eps), barrier, snapshot, t))
                / (2.0 * eps);
        }

        let (h, h_dot) = h_and_hdot(x, barrier, snapshot, t);
        let rhs = lf_psi + dt_psi + cfg.beta1 * h_dot + cfg.beta2 * (h_dot + cfg.beta1 * h);
        (coeff, rhs)
    }

    fn random_state(r: &mut ChaCha8Rng) -> State {
        State::from_array([
            r.gen_range(-2.0..2.0),
            r.gen_range(-2.0..2.0),
            r.gen_range(-3.0..3.0),
            r.gen_range(-1.5..1.5),
            r.gen_range(-0.5..0.5),
            r.gen_range(-1.0..1.0),
        ])
    }

    #[test]
    fn analytic_hdot_matches_finite_difference() {
        let mut r = ChaCha8Rng::seed_from_u64(21);
        let params = ModelParams::point_defaults();
        let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
        let mut checked = 0;
        while checked < 200 {
            let x = random_state(&mut r);
            let barrier = if r.gen_bool(0.7) {
                Barrier::Circle(CircleObstacle {
                    center: [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)],
                    velocity: [r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)],
                    r_i: 0.4,
                    r_p: 0.15,
                })
            } else {
                Barrier::Wall(WallBarrier::new(
                    [r.gen_range(-1.0..1.0f64).signum(), r.gen_range(-0.2..0.2)],
                    r.gen_range(1.0..3.0),
                ))
            };
            if let Barrier::Circle(o) = &barrier {
                let d = ((x.x_p - o.center[0]).powi(2) + (x.y_p - o.center[1]).powi(2)).sqrt();
                if d < 0.3 {
                    continue; // keep away from the kink for clean differences
                }
            }
            let (_, analytic) = h_and_hdot(&x, &barrier, &snapshot, 0.0);
            let numeric = numeric_hdot(&x, &barrier, &snapshot, 0.0);
            let denom = analytic.abs().max(numeric.abs()).max(1e-3);
            assert!(
                ((analytic - numeric) / denom).abs() < 1e-4,
                "analytic {analytic} vs numeric {numeric}"
            );
            checked += 1;
        }
    }

    #[test]
    fn nominal_constraint_matches_numeric_lie_oracle() {
        // robustness off, no residual: regression against nested numeric
        // Lie derivatives of the analytic psi.
        let mut r = ChaCha8Rng::seed_from_u64(22);
        let cfg = CbfConfig::default();
        for kind in [RobotKind::Point, RobotKind::Car] {
            let params = ModelParams::defaults_for(kind);
            let snapshot = ModelSnapshot::nominal(kind, params, None);
            let mut checked = 0;
            while checked < 60 {
                let x = random_state(&mut r);
                let o = CircleObstacle {
                    center: [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)],
                    velocity: [r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)],
                    r_i: 0.4,
                    r_p: 0.15,
                };
                let d = ((x.x_p - o.center[0]).powi(2) + (x.y_p - o.center[1]).powi(2)).sqrt();
                if d < 0.5 {
                    continue;
                }
                let barrier = Barrier::Circle(o);
                let built = build_constraint(&x, &barrier, &snapshot, &[0.0; 6], 0.0, &cfg, 0.0);
                let (ncoeff, nrhs) = numeric_constraint(&x, &barrier, &snapshot, &cfg, 0.0);
                for j in 0..2 {
                    let denom = built.constraint.coeff[j].abs().max(ncoeff[j].abs()).max(1.0);
                    assert!(
                        ((built.constraint.coeff[j] - ncoeff[j]) / denom).abs() < 1e-6,
                        "coeff[{j}]: {} vs {}",
                        built.constraint.coeff[j],
                        ncoeff[j]
                    );
                }
                let denom = built.constraint.rhs.abs().max(nrhs.abs()).max(1.0);
                assert!(
                    ((built.constraint.rhs - nrhs) / denom).abs() < 1e-6,
                    "rhs: {} vs {}",
                    built.constraint.rhs,
                    nrhs
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn residual_constraint_matches_numeric_lie_oracle() {
        // Same oracle with a trained residual in the snapshot: exercises the
        // network input-gradient path inside the constraint assembly.
        let mut r = ChaCha8Rng::seed_from_u64(23);
        let params = ModelParams::point_defaults();
        let mut res = ResidualModel::new(&[16, 16], 5e-3, &mut r);
        for _ in 0..500 {
            let x = random_state(&mut r);
            let u = Control::Point(PointControl {
                c_v: r.gen_range(-1.0..1.0),
                c_omega: r.gen_range(-1.0..1.0),
            });
            let target = crate::dynamics::StateDeriv::from_array([
                0.1, -0.2, 0.3, -0.1, 0.2, 0.05,
            ]);
            res.update(&x, &u, &target, &crate::dynamics::StateDeriv::zero());
        }
        let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, Some(&res));
        let cfg = CbfConfig::default();
        let mut checked = 0;
        while checked < 40 {
            let x = random_state(&mut r);
            let o = CircleObstacle {
                center: [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)],
                velocity: [0.2, -0.1],
                r_i: 0.4,
                r_p: 0.15,
            };
            let d = ((x.x_p - o.center[0]).powi(2) + (x.y_p - o.center[1]).powi(2)).sqrt();
            if d < 0.5 {
                continue;
            }
            let barrier = Barrier::Circle(o);
            let built = build_constraint(&x, &barrier, &snapshot, &[0.0; 6], 0.0, &cfg, 0.0);
            let (ncoeff, nrhs) = numeric_constraint(&x, &barrier, &snapshot, &cfg, 0.0);
            for j in 0..2 {
                let denom = built.constraint.coeff[j].abs().max(ncoeff[j].abs()).max(1.0);
                assert!(((built.constraint.coeff[j] - ncoeff[j]) / denom).abs() < 1e-5);
            }
            let denom = built.constraint.rhs.abs().max(nrhs.abs()).max(1.0);
            assert!(((built.constraint.rhs - nrhs) / denom).abs() < 1e-5);
            checked += 1;
        }
    }

    #[test]
    fn error_bound_shifts_rhs_by_gradient_norm() {
        let mut r = ChaCha8Rng::seed_from_u64(24);
        let params = ModelParams::point_defaults();
        let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
        let cfg0 = CbfConfig { robustness: RobustnessMode::DobPlusBound, ..CbfConfig::default() };
        for _ in 0..30 {
            let x = random_state(&mut r);
            let o = static_obstacle(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), 0.4, 0.15);
            let d = ((x.x_p - o.center[0]).powi(2) + (x.y_p - o.center[1]).powi(2)).sqrt();
            if d < 0.3 {
                continue;
            }
            let barrier = Barrier::Circle(o);
            let b = r.gen_range(0.0..2.0);
            let with0 = build_constraint(&x, &barrier, &snapshot, &[0.0; 6], 0.0, &cfg0, 0.0);
            let withb = build_constraint(&x, &barrier, &snapshot, &[0.0; 6], b, &cfg0, 0.0);
            // numeric gradient norm of psi
            let eps = 1e-6;
            let mut gnorm2 = 0.0;
            for i in 0..STATE_DIM {
                let mut plus = x.to_array();
                let mut minus = x.to_array();
                plus[i] += eps;
                minus[i] -= eps;
                let gi = (psi_at(plus, &barrier, &snapshot, 0.0)
                    - psi_at(minus, &barrier, &snapshot, 0.0))
                    / (2.0 * eps);
                gnorm2 += gi * gi;
            }
            let expect = gnorm2.sqrt() * b;
            assert_relative_eq!(with0.constraint.rhs - withb.constraint.rhs, expect, max_relative = 1e-5, epsilon = 1e-9);
        }
    }

    #[test]
    fn dob_mode_adds_estimate_term() {
        let params = ModelParams::point_defaults();
        let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
        let x = State::from_array([0.0, 0.0, 0.4, 1.0, 0.0, 0.0]);
        let barrier = Barrier::Circle(static_obstacle(2.0, 0.5, 0.4, 0.15));
        let none_cfg = CbfConfig::default();
        let dob_cfg = CbfConfig { robustness: RobustnessMode::Dob, ..none_cfg };
        let zero = build_constraint(&x, &barrier, &snapshot, &[0.0; 6], 0.0, &dob_cfg, 0.0);
        let plain = build_constraint(&x, &barrier, &snapshot, &[0.0; 6], 0.0, &none_cfg, 0.0);
        assert_eq!(zero.constraint, plain.constraint);
        let d_hat = [0.0, 0.0, 0.1, 0.2, -0.3, 0.05];
        let with_d = build_constraint(&x, &barrier, &snapshot, &d_hat, 0.0, &dob_cfg, 0.0);
        assert!(with_d.constraint.rhs != plain.constraint.rhs);
        assert_eq!(with_d.constraint.coeff, plain.constraint.coeff);
    }

    #[test]
    fn degenerate_center_emits_flagged_sentinel() {
        let params = ModelParams::point_defaults();
        let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
        let o = static_obstacle(0.0, 0.0, 0.4, 0.15);
        let x = State::zero();
        let built = build_constraint(&x, &Barrier::Circle(o), &snapshot, &[0.0; 6], 0.0, &CbfConfig::default(), 0.0);
        assert!(built.degenerate);
        assert_eq!(built.constraint.coeff, vec![0.0, 0.0]);
        assert!(built.constraint.rhs < -1e29 && built.constraint.rhs.is_finite());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn translation_invariance(seed in 0u64..5000, tx in -5.0..5.0f64, ty in -5.0..5.0f64) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::point_defaults();
            let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
            let x = random_state(&mut r);
            let o = CircleObstacle {
                center: [r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)],
                velocity: [r.gen_range(-0.5..0.5), r.gen_range(-0.5..0.5)],
                r_i: 0.4,
                r_p: 0.15,
            };
            let d = ((x.x_p - o.center[0]).powi(2) + (x.y_p - o.center[1]).powi(2)).sqrt();
            prop_assume!(d > 1e-3);
            let cfg = CbfConfig::default();
            let built = build_constraint(&x, &Barrier::Circle(o), &snapshot, &[0.0; 6], 0.0, &cfg, 0.0);

            let mut xa = x.to_array();
            xa[0] += tx;
            xa[1] += ty;
            let x2 = State::from_array(xa);
            let o2 = CircleObstacle { center: [o.center[0] + tx, o.center[1] + ty], ..o };
            let built2 = build_constraint(&x2, &Barrier::Circle(o2), &snapshot, &[0.0; 6], 0.0, &cfg, 0.0);

            prop_assert!((built.h - built2.h).abs() < 1e-9);
            prop_assert!((built.h_dot - built2.h_dot).abs() < 1e-9);
            prop_assert!((built.constraint.rhs - built2.constraint.rhs).abs() < 1e-8);
            for j in 0..2 {
                prop_assert!((built.constraint.coeff[j] - built2.constraint.coeff[j]).abs() < 1e-9);
            }
        }

        #[test]
        fn h_circle_rotation_invariance(seed in 0u64..5000, ang in -3.0..3.0f64) {
            // rotating the robot position about the obstacle center leaves h
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let o = static_obstacle(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 0.5, 0.2);
            let x = random_state(&mut r);
            let (sa, ca) = ang.sin_cos();
            let dx = x.x_p - o.center[0];
            let dy = x.y_p - o.center[1];
            let mut xa = x.to_array();
            xa[0] = o.center[0] + ca * dx - sa * dy;
            xa[1] = o.center[1] + sa * dx + ca * dy;
            let x2 = State::from_array(xa);
            prop_assert!((h_circle(&x, &o, 0.0) - h_circle(&x2, &o, 0.0)).abs() < 1e-10);
        }

        #[test]
        fn larger_error_bound_never_loosens(seed in 0u64..5000, b1 in 0.0..1.0f64, extra in 0.0..1.0f64) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let params = ModelParams::point_defaults();
            let snapshot = ModelSnapshot::nominal(RobotKind::Point, params, None);
            let x = random_state(&mut r);
            let o = static_obstacle(r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0), 0.4, 0.15);
            let d = ((x.x_p - o.center[0]).powi(2) + (x.y_p - o.center[1]).powi(2)).sqrt();
            prop_assume!(d > 1e-3);
            let cfg = CbfConfig { robustness: RobustnessMode::DobPlusBound, ..CbfConfig::default() };
            let lo = build_constraint(&x, &Barrier::Circle(o), &snapshot, &[0.0; 6], b1, &cfg, 0.0);
            let hi = build_constraint(&x, &Barrier::Circle(o), &snapshot, &[0.0; 6], b1 + extra, &cfg, 0.0);
            prop_assert!(hi.constraint.rhs <= lo.constraint.rhs + 1e-12);
        }
    }
}
