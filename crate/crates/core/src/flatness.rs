//! Kinematic bicycle model and differential-flatness state/input recovery.
//!
//! The bicycle model has state (x, y, v, theta) with (x, y) at the rear-axle
//! center, and input (a_t, delta). Because the model is differentially flat in
//! (x, y), every state and input along a twice-differentiable 2D trajectory
//! follows algebraically from the position derivatives.

use serde::{Deserialize, Serialize};

use crate::error::FlatnessError;
use crate::fit::PolynomialTrajectory;

/// Speeds below this are treated as degenerate: heading and steering are
/// undefined at standstill.
pub const MIN_FLAT_SPEED: f64 = 1e-3;

/// Vehicle geometry and actuation limits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// Wheelbase in meters.
    pub wheelbase: f64,
    /// Footprint length in meters.
    pub length: f64,
    /// Footprint width in meters.
    pub width: f64,
    /// Maximum speed in m/s.
    pub v_max: f64,
    /// Maximum longitudinal acceleration magnitude in m/s^2.
    pub a_max: f64,
    /// Maximum steering angle magnitude in rad.
    pub steer_max: f64,
    /// Bounded actuation uncertainty (acceleration m/s^2, steering rad).
    pub input_uncertainty: [f64; 2],
}

impl Default for VehicleParams {
    fn default() -> Self {
        VehicleParams {
            wheelbase: 2.8,
            length: 4.3,
            width: 1.9,
            v_max: 15.0,
            a_max: 5.0,
            steer_max: std::f64::consts::FRAC_PI_6,
            input_uncertainty: [0.01, 0.005],
        }
    }
}

impl VehicleParams {
    /// Half-diagonal of the footprint, used to inflate obstacles when the
    /// ego is reduced to a point during skeleton planning.
    pub fn half_diagonal(&self) -> f64 {
        0.5 * (self.length * self.length + self.width * self.width).sqrt()
    }
}

/// Vehicle state: position (rear axle), forward speed, heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub theta: f64,
}

/// Vehicle input: longitudinal acceleration and front steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleInput {
    pub accel: f64,
    pub steer: f64,
}

impl VehicleInput {
    /// Whether both inputs are within the actuation limits.
    pub fn admissible(&self, params: &VehicleParams) -> bool {
        self.accel.abs() <= params.a_max && self.steer.abs() <= params.steer_max
    }
}

/// Continuous bicycle dynamics: d/dt (x, y, v, theta).
pub fn bicycle_derivative(
    state: &VehicleState,
    input: &VehicleInput,
    params: &VehicleParams,
) -> [f64; 4] {
    [
        state.v * state.theta.cos(),
        state.v * state.theta.sin(),
        input.accel,
        state.v * input.steer.tan() / params.wheelbase,
    ]
}

/// One RK4 step of the bicycle model with the input held constant.
pub fn bicycle_rk4_step(
    state: &VehicleState,
    input: &VehicleInput,
    params: &VehicleParams,
    dt: f64,
) -> VehicleState {
    let add = |s: &VehicleState, k: &[f64; 4], h: f64| VehicleState {
        x: s.x + h * k[0],
        y: s.y + h * k[1],
        v: s.v + h * k[2],
        theta: s.theta + h * k[3],
    };
    let k1 = bicycle_derivative(state, input, params);
    let k2 = bicycle_derivative(&add(state, &k1, 0.5 * dt), input, params);
    let k3 = bicycle_derivative(&add(state, &k2, 0.5 * dt), input, params);
    let k4 = bicycle_derivative(&add(state, &k3, dt), input, params);
    VehicleState {
        x: state.x + dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y: state.y + dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        v: state.v + dt / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        theta: state.theta + dt / 6.0 * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3]),
    }
}

/// State of the flat system at trajectory time `t`.
pub fn state_at(
    traj: &PolynomialTrajectory,
    t: f64,
    _params: &VehicleParams,
) -> Result<VehicleState, FlatnessError> {
    let vel = traj.velocity(t);
    let speed = vel.norm();
    if speed <= MIN_FLAT_SPEED {
        return Err(FlatnessError::DegenerateSpeed {
            t,
            speed,
            min: MIN_FLAT_SPEED,
        });
    }
    let pos = traj.position(t);
    Ok(VehicleState {
        x: pos.x,
        y: pos.y,
        v: speed,
        theta: vel.y.atan2(vel.x),
    })
}

/// Input of the flat system at trajectory time `t`.
pub fn input_at(
    traj: &PolynomialTrajectory,
    t: f64,
    params: &VehicleParams,
) -> Result<VehicleInput, FlatnessError> {
    let vel = traj.velocity(t);
    let acc = traj.acceleration(t);
    let speed = vel.norm();
    if speed <= MIN_FLAT_SPEED {
        return Err(FlatnessError::DegenerateSpeed {
            t,
            speed,
            min: MIN_FLAT_SPEED,
        });
    }
    let accel = (vel.x * acc.x + vel.y * acc.y) / speed;
    let curvature_num = vel.x * acc.y - vel.y * acc.x;
    let steer = (curvature_num * params.wheelbase / speed.powi(3)).atan();
    Ok(VehicleInput { accel, steer })
}

/// Sampled state and input along a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct FlatSample {
    pub t: f64,
    pub state: VehicleState,
    pub input: VehicleInput,
}

/// Recovers states and inputs at t = 0, dt, 2 dt, ..., T. Fails on the first
/// sample where the speed drops below [`MIN_FLAT_SPEED`].
pub fn recover_states_inputs(
    traj: &PolynomialTrajectory,
    dt: f64,
    params: &VehicleParams,
) -> Result<Vec<FlatSample>, FlatnessError> {
    assert!(dt > 0.0, "sampling step must be positive");
    let duration = traj.duration();
    let n = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = (k as f64 * dt).min(duration);
        out.push(FlatSample {
            t,
            state: state_at(traj, t, params)?,
            input: input_at(traj, t, params)?,
        });
    }
    Ok(out)
}
