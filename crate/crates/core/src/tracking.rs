//! Pure-pursuit tracking controller and closed-loop simulation, used to
//! check that low reachable-set deviation really does translate into better
//! tracking.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::TrackingError;
use crate::fit::PolynomialTrajectory;
use crate::flatness::{bicycle_rk4_step, state_at, VehicleInput, VehicleParams, VehicleState};
use crate::geometry::wrap_angle;

/// Pure-pursuit controller settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PurePursuitConfig {
    /// Speed-proportional lookahead coefficient (s).
    pub lookahead_gain: f64,
    /// Base lookahead distance (m).
    pub lookahead_base: f64,
    /// Proportional speed-control gain (1/s).
    pub speed_gain: f64,
    /// Number of evaluation points for the tracking-error metrics.
    pub horizon_steps: usize,
    /// Closed-loop integration step (s).
    pub sim_step: f64,
}

impl Default for PurePursuitConfig {
    fn default() -> Self {
        PurePursuitConfig {
            lookahead_gain: 0.1,
            lookahead_base: 0.8,
            speed_gain: 5.0,
            horizon_steps: 50,
            sim_step: 1e-3,
        }
    }
}

/// Reference trajectory resampled for pursuit target search.
pub struct ReferencePath {
    points: Vec<(f64, Vector2<f64>, f64)>, // (t, position, speed)
}

impl ReferencePath {
    pub fn from_trajectory(traj: &PolynomialTrajectory, spacing: f64) -> Self {
        let duration = traj.duration();
        let n = ((duration / spacing).ceil() as usize).max(2);
        let points = (0..=n)
            .map(|k| {
                let t = duration * k as f64 / n as f64;
                (t, traj.position(t), traj.velocity(t).norm())
            })
            .collect();
        ReferencePath { points }
    }

    fn nearest_index_from(&self, position: Vector2<f64>, start: usize) -> usize {
        // Walk forward from the previous match while the distance shrinks.
        let mut best = start.min(self.points.len() - 1);
        let mut best_d = (self.points[best].1 - position).norm();
        for i in best + 1..self.points.len() {
            let d = (self.points[i].1 - position).norm();
            if d <= best_d {
                best = i;
                best_d = d;
            } else {
                break;
            }
        }
        best
    }
}

/// One pursuit control step: steer toward the first reference point at least
/// one lookahead distance ahead of the vehicle's path projection, and close
/// the speed error proportionally.
pub fn pure_pursuit_step(
    state: &VehicleState,
    path: &ReferencePath,
    nearest_hint: usize,
    sim_time: f64,
    cfg: &PurePursuitConfig,
    params: &VehicleParams,
) -> Result<(VehicleInput, usize), TrackingError> {
    let position = Vector2::new(state.x, state.y);
    let nearest = path.nearest_index_from(position, nearest_hint);
    let lookahead = cfg.lookahead_gain * state.v + cfg.lookahead_base;
    let mut target = None;
    for i in nearest..path.points.len() {
        if (path.points[i].1 - position).norm() >= lookahead {
            target = Some(path.points[i].1);
            break;
        }
    }
    let Some(target) = target else {
        return Err(TrackingError::TrackEnd);
    };
    let to_target = target - position;
    let alpha = to_target.y.atan2(to_target.x) - state.theta;
    let distance = to_target.norm().max(1e-6);
    let steer = (2.0 * params.wheelbase * wrap_angle(alpha).sin() / distance)
        .atan()
        .clamp(-params.steer_max, params.steer_max);

    // Time-matched reference speed.
    let t = sim_time.min(path.points.last().unwrap().0);
    let idx = path
        .points
        .partition_point(|p| p.0 <= t)
        .clamp(1, path.points.len() - 1);
    let (t0, _, v0) = path.points[idx - 1];
    let (t1, _, v1) = path.points[idx];
    let v_ref = v0 + (v1 - v0) * ((t - t0) / (t1 - t0));
    let accel = (cfg.speed_gain * (v_ref - state.v)).clamp(-params.a_max, params.a_max);

    Ok((VehicleInput { accel, steer }, nearest))
}

/// One logged closed-loop step.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackingLogEntry {
    pub t: f64,
    pub state: VehicleState,
    pub input: VehicleInput,
}

/// Simulates the bicycle model under pure-pursuit control from the
/// trajectory's own start state until the reference ends.
pub fn simulate_tracking(
    traj: &PolynomialTrajectory,
    cfg: &PurePursuitConfig,
    params: &VehicleParams,
) -> Result<Vec<TrackingLogEntry>, TrackingError> {
    let path = ReferencePath::from_trajectory(traj, 0.05);
    let mut state = state_at(traj, 0.0, params).map_err(|_| TrackingError::EmptyLog)?;
    let duration = traj.duration();
    let steps = (duration / cfg.sim_step).round() as usize;
    let mut log = Vec::with_capacity(steps + 1);
    let mut hint = 0usize;
    let mut t = 0.0;
    for step in 0..steps {
        let (input, nearest) = match pure_pursuit_step(&state, &path, hint, t, cfg, params) {
            Ok(v) => v,
            Err(TrackingError::TrackEnd) => break,
            Err(e) => return Err(e),
        };
        hint = nearest;
        log.push(TrackingLogEntry { t, state, input });
        state = bicycle_rk4_step(&state, &input, params, cfg.sim_step);
        t += cfg.sim_step;
        let reference = traj.position(t.min(duration));
        let error = (Vector2::new(state.x, state.y) - reference).norm();
        if error > 10.0 {
            return Err(TrackingError::Diverged { step, error });
        }
    }
    if log.is_empty() {
        return Err(TrackingError::EmptyLog);
    }
    Ok(log)
}

/// Tracking-error summary against the time-matched reference.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrackingMetrics {
    /// RMSE of the lateral offset from the reference (m).
    pub lateral_rmse: f64,
    /// RMSE of the position deviation (m).
    pub position_rmse: f64,
    /// RMSE of the wrapped heading error (rad).
    pub heading_rmse: f64,
    /// Mean absolute yaw rate over the run (rad/s).
    pub mean_yaw_rate: f64,
}

/// Root-mean-square tracking errors over `horizon_steps` evaluation points
/// spread evenly across the log, each compared to the reference state at the
/// same timestamp.
pub fn tracking_metrics(
    log: &[TrackingLogEntry],
    traj: &PolynomialTrajectory,
    cfg: &PurePursuitConfig,
    params: &VehicleParams,
) -> Result<TrackingMetrics, TrackingError> {
    if log.is_empty() {
        return Err(TrackingError::EmptyLog);
    }
    let n = cfg.horizon_steps.max(1).min(log.len());
    let mut lateral_sq = 0.0;
    let mut position_sq = 0.0;
    let mut heading_sq = 0.0;
    let mut yaw_rate_sum = 0.0;
    for k in 0..n {
        let idx = if n == 1 {
            0
        } else {
            k * (log.len() - 1) / (n - 1)
        };
        let entry = &log[idx];
        let t = entry.t.min(traj.duration());
        let ref_pos = traj.position(t);
        let ref_vel = traj.velocity(t);
        let ref_heading = ref_vel.y.atan2(ref_vel.x);
        let dev = Vector2::new(entry.state.x, entry.state.y) - ref_pos;
        let lateral = -ref_heading.sin() * dev.x + ref_heading.cos() * dev.y;
        lateral_sq += lateral * lateral;
        position_sq += dev.norm_squared();
        let heading_err = wrap_angle(entry.state.theta - ref_heading);
        heading_sq += heading_err * heading_err;
        yaw_rate_sum += (entry.state.v * entry.input.steer.tan() / params.wheelbase).abs();
    }
    let n = n as f64;
    Ok(TrackingMetrics {
        lateral_rmse: (lateral_sq / n).sqrt(),
        position_rmse: (position_sq / n).sqrt(),
        heading_rmse: (heading_sq / n).sqrt(),
        mean_yaw_rate: yaw_rate_sum / n,
    })
}
