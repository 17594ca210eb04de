//! Robot state/control types, nominal kinematic models, the simulator's
//! "true" plant, and a fixed-step RK4 integrator.
//!
//! Both robots share a 6-dimensional state. The nominal models are
//! control-affine, so they are exposed both as full derivative functions
//! and as a (drift, input-matrix) decomposition that the barrier
//! construction consumes directly.

use serde::{Deserialize, Serialize};

/// Number of state components.
pub const STATE_DIM: usize = 6;
/// Number of control components (both robots).
pub const CONTROL_DIM: usize = 2;

/// Coupling between forward speed and yaw rate in the true plant's lateral
/// slip channel, as a fraction of `slip_gain` so that slip off means the
/// whole channel is off.
const SLIP_COUPLING_RATIO: f64 = -0.25;

/// Robot pose and body velocities: `[x_p, y_p, theta_p, v_x, v_y, omega]`.
///
/// `theta_p` is stored unwrapped; use [`wrap_angle`] where a principal
/// value is needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    /// Position x (m).
    pub x_p: f64,
    /// Position y (m).
    pub y_p: f64,
    /// Yaw (rad), unwrapped.
    pub theta_p: f64,
    /// Body longitudinal velocity (m/s).
    pub v_x: f64,
    /// Body lateral velocity (m/s).
    pub v_y: f64,
    /// Yaw rate (rad/s).
    pub omega: f64,
}

impl State {
    pub fn zero() -> Self {
        Self::from_array([0.0; STATE_DIM])
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self {
            x_p: a[0],
            y_p: a[1],
            theta_p: a[2],
            v_x: a[3],
            v_y: a[4],
            omega: a[5],
        }
    }

    pub fn to_array(self) -> [f64; STATE_DIM] {
        [self.x_p, self.y_p, self.theta_p, self.v_x, self.v_y, self.omega]
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x_p, self.y_p]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Time derivative of [`State`], same component order, per-second units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateDeriv {
    pub x_p: f64,
    pub y_p: f64,
    pub theta_p: f64,
    pub v_x: f64,
    pub v_y: f64,
    pub omega: f64,
}

impl StateDeriv {
    pub fn zero() -> Self {
        Self::from_array([0.0; STATE_DIM])
    }

    pub fn from_array(a: [f64; STATE_DIM]) -> Self {
        Self {
            x_p: a[0],
            y_p: a[1],
            theta_p: a[2],
            v_x: a[3],
            v_y: a[4],
            omega: a[5],
        }
    }

    pub fn to_array(self) -> [f64; STATE_DIM] {
        [self.x_p, self.y_p, self.theta_p, self.v_x, self.v_y, self.omega]
    }

    pub fn add(self, other: StateDeriv) -> StateDeriv {
        let a = self.to_array();
        let b = other.to_array();
        let mut out = [0.0; STATE_DIM];
        for i in 0..STATE_DIM {
            out[i] = a[i] + b[i];
        }
        StateDeriv::from_array(out)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Normalize an angle to the principal interval `(-pi, pi]`. Idempotent.
pub fn wrap_angle(theta: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let w = theta.rem_euclid(two_pi);
    if w > std::f64::consts::PI {
        w - two_pi
    } else {
        w
    }
}

/// Which kinematic model a robot follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RobotKind {
    Point,
    Car,
}

/// Target velocity / yaw-rate commands for the Point robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointControl {
    pub c_v: f64,
    pub c_omega: f64,
}

/// Left/right wheel angular-velocity commands for the Car robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarControl {
    pub c_l: f64,
    pub c_r: f64,
}

/// Control input for either robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Control {
    Point(PointControl),
    Car(CarControl),
}

impl Control {
    pub fn from_array(kind: RobotKind, u: [f64; CONTROL_DIM]) -> Self {
        match kind {
            RobotKind::Point => Control::Point(PointControl { c_v: u[0], c_omega: u[1] }),
            RobotKind::Car => Control::Car(CarControl { c_l: u[0], c_r: u[1] }),
        }
    }

    pub fn to_array(self) -> [f64; CONTROL_DIM] {
        match self {
            Control::Point(c) => [c.c_v, c.c_omega],
            Control::Car(c) => [c.c_l, c.c_r],
        }
    }

    pub fn kind(self) -> RobotKind {
        match self {
            Control::Point(_) => RobotKind::Point,
            Control::Car(_) => RobotKind::Car,
        }
    }
}

/// Per-component control box bounds, the admissible set of inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub lo: [f64; CONTROL_DIM],
    pub hi: [f64; CONTROL_DIM],
}

impl ControlBox {
    pub fn contains(&self, u: &[f64; CONTROL_DIM], tol: f64) -> bool {
        (0..CONTROL_DIM).all(|j| u[j] >= self.lo[j] - tol && u[j] <= self.hi[j] + tol)
    }

    pub fn clamp(&self, u: [f64; CONTROL_DIM]) -> [f64; CONTROL_DIM] {
        let mut out = u;
        for j in 0..CONTROL_DIM {
            out[j] = out[j].clamp(self.lo[j], self.hi[j]);
        }
        out
    }
}

/// Kinematic model gains plus the true-plant extras (lateral slip and yaw
/// damping) that the nominal models do not know about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Yaw gain.
    pub k_omega: f64,
    /// Velocity gain.
    pub k_v1: f64,
    /// Velocity scale.
    pub k_v2: f64,
    /// Lateral friction coefficient (true plant only).
    pub slip_gain: f64,
    /// Yaw-rate damping (true plant only).
    pub omega_damping: f64,
}

impl ModelParams {
    pub fn point_defaults() -> Self {
        Self {
            k_omega: 2.0,
            k_v1: 1.0,
            k_v2: 2.0,
            slip_gain: 2.0,
            omega_damping: 1.0,
        }
    }

    pub fn car_defaults() -> Self {
        Self {
            k_omega: 1.5,
            k_v1: 2.0,
            k_v2: 1.0,
            slip_gain: 2.0,
            omega_damping: 1.0,
        }
    }

    pub fn defaults_for(kind: RobotKind) -> Self {
        match kind {
            RobotKind::Point => Self::point_defaults(),
            RobotKind::Car => Self::car_defaults(),
        }
    }

    /// Scale the kinematic gains by `factor`, leaving the true-plant extras
    /// untouched. `factor = 1.5` realizes a 50% parametric model error.
    pub fn scaled(self, factor: f64) -> Self {
        Self {
            k_omega: self.k_omega * factor,
            k_v1: self.k_v1 * factor,
            k_v2: self.k_v2 * factor,
            ..self
        }
    }

    pub fn is_valid(&self) -> bool {
        self.k_omega > 0.0
            && self.k_v1 > 0.0
            && self.k_v2 > 0.0
            && self.slip_gain >= 0.0
            && self.omega_damping >= 0.0
    }
}

/// Input matrix g(x) as two columns of length [`STATE_DIM`]; column j
/// multiplies control component j. Constant in the state for both models.
pub type InputMatrix = [[f64; STATE_DIM]; CONTROL_DIM];

/// Drift term f(x) of the nominal model (the control-independent part).
pub fn nominal_drift(kind: RobotKind, state: &State, params: &ModelParams) -> StateDeriv {
    let (s, c) = state.theta_p.sin_cos();
    match kind {
        RobotKind::Point => StateDeriv::from_array([
            state.v_x * c,
            state.v_x * s,
            0.0,
            -params.k_v2 * state.v_x,
            0.0,
            0.0,
        ]),
        RobotKind::Car => StateDeriv::from_array([
            state.v_x * c,
            state.v_x * s,
            state.omega,
            -params.k_v1 * state.v_x,
            0.0,
            0.0,
        ]),
    }
}

/// Input matrix g of the nominal model.
pub fn nominal_input_matrix(kind: RobotKind, params: &ModelParams) -> InputMatrix {
    match kind {
        RobotKind::Point => [
            [0.0, 0.0, 0.0, params.k_v2 * params.k_v1, 0.0, 0.0],
            [0.0, 0.0, params.k_omega, 0.0, 0.0, 0.0],
        ],
        RobotKind::Car => [
            [0.0, 0.0, 0.0, params.k_v1 * params.k_v2, 0.0, -params.k_omega],
            [0.0, 0.0, 0.0, params.k_v1 * params.k_v2, 0.0, params.k_omega],
        ],
    }
}

fn affine_deriv(kind: RobotKind, state: &State, u: [f64; CONTROL_DIM], params: &ModelParams) -> StateDeriv {
    let f = nominal_drift(kind, state, params).to_array();
    let g = nominal_input_matrix(kind, params);
    let mut out = f;
    for j in 0..CONTROL_DIM {
        for i in 0..STATE_DIM {
            out[i] += g[j][i] * u[j];
        }
    }
    StateDeriv::from_array(out)
}

/// Extended kinematic unicycle model of the Point robot.
pub fn nominal_point_deriv(state: &State, control: PointControl, params: &ModelParams) -> StateDeriv {
    affine_deriv(RobotKind::Point, state, [control.c_v, control.c_omega], params)
}

/// Differential-drive kinematic model of the Car robot.
pub fn nominal_car_deriv(state: &State, control: CarControl, params: &ModelParams) -> StateDeriv {
    affine_deriv(RobotKind::Car, state, [control.c_l, control.c_r], params)
}

/// Nominal model dispatched on the control variant.
pub fn nominal_deriv(state: &State, control: &Control, params: &ModelParams) -> StateDeriv {
    match *control {
        Control::Point(c) => nominal_point_deriv(state, c, params),
        Control::Car(c) => nominal_car_deriv(state, c, params),
    }
}

/// Drift of the true plant: nominal drift evaluated with the (mismatched)
/// true gains, plus lateral slip and yaw damping. Wind is not included; it
/// enters as the additive disturbance.
pub fn true_drift(kind: RobotKind, state: &State, true_params: &ModelParams) -> StateDeriv {
    let mut d = nominal_drift(kind, state, true_params).to_array();
    d[4] += true_params.slip_gain
        * (-state.v_y + SLIP_COUPLING_RATIO * state.v_x * state.omega);
    d[5] += -true_params.omega_damping * state.omega;
    StateDeriv::from_array(d)
}

/// Rotate a world-frame 2-vector into the body frame at yaw `theta`.
pub fn world_to_body(theta: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * v[0] + s * v[1], -s * v[0] + c * v[1]]
}

/// The simulator's actual dynamics: true drift + true input matrix times
/// control, plus the world-frame wind acceleration resolved into the body
/// velocity channels.
pub fn true_plant_deriv(
    state: &State,
    control: &Control,
    true_params: &ModelParams,
    wind_world: [f64; 2],
) -> StateDeriv {
    let mut d = true_drift(control.kind(), state, true_params).to_array();
    let g = nominal_input_matrix(control.kind(), true_params);
    let u = control.to_array();
    for j in 0..CONTROL_DIM {
        for i in 0..STATE_DIM {
            d[i] += g[j][i] * u[j];
        }
    }
    let wb = world_to_body(state.theta_p, wind_world);
    d[3] += wb[0];
    d[4] += wb[1];
    StateDeriv::from_array(d)
}

/// One classical 4th-order Runge-Kutta step of size `dt`.
///
/// `deriv` receives the stage state and the stage time offset in `[0, dt]`,
/// so time-varying terms (wind) are sampled at the proper instants.
pub fn integrate<F>(state: &State, dt: f64, deriv: F) -> State
where
    F: Fn(&State, f64) -> StateDeriv,
{
    debug_assert!(dt > 0.0);
    let x = state.to_array();
    let shift = |k: &[f64; STATE_DIM], h: f64| {
        let mut y = x;
        for i in 0..STATE_DIM {
            y[i] += h * k[i];
        }
        State::from_array(y)
    };

    let k1 = deriv(state, 0.0).to_array();
    let k2 = deriv(&shift(&k1, dt / 2.0), dt / 2.0).to_array();
    let k3 = deriv(&shift(&k2, dt / 2.0), dt / 2.0).to_array();
    let k4 = deriv(&shift(&k3, dt), dt).to_array();

    let mut out = x;
    for i in 0..STATE_DIM {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    State::from_array(out)
}
