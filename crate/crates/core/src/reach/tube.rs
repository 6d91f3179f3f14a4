//! Linearization of the bicycle model along a reference, the zonotope tube
//! recursion, and the feasibility verdicts derived from it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::ReachError;
use crate::flatness::{FlatSample, VehicleParams, VehicleState};
use crate::geometry::wrap_angle;

use super::taylor::taylor_terms;
use super::zonotope::Zonotope;

/// One-step linearization of the bicycle model around a reference state and
/// input, in both discrete-increment and continuous form.
#[derive(Debug, Clone)]
pub struct LinearizedStep {
    /// Augmented discrete matrix `[[A_star, c_star], [0, 0]]`.
    pub a_step: DMatrix<f64>,
    /// Augmented discrete input matrix `[[B_star], [0]]`.
    pub b_step: DMatrix<f64>,
    /// Continuous state Jacobian of the model at the reference.
    pub jac_state: DMatrix<f64>,
    /// Continuous input Jacobian at the reference.
    pub jac_input: DMatrix<f64>,
    /// Model derivative at the reference.
    pub f_ref: DVector<f64>,
    pub state_ref: VehicleState,
    pub dt: f64,
}

impl LinearizedStep {
    /// Augmented continuous matrix `[[J_state, f - J_state x_ref], [0, 0]]`:
    /// the constant term rides on the always-one last coordinate, so the
    /// matrix exponential propagates the affine flow exactly.
    pub fn augmented_continuous(&self) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(5, 5);
        a.view_mut((0, 0), (4, 4)).copy_from(&self.jac_state);
        let xi = DVector::from_vec(vec![
            self.state_ref.x,
            self.state_ref.y,
            self.state_ref.v,
            self.state_ref.theta,
        ]);
        let constant = &self.f_ref - &self.jac_state * xi;
        a.view_mut((0, 4), (4, 1)).copy_from(&constant);
        a
    }

    /// Augmented continuous input matrix `[[J_input], [0]]`.
    pub fn augmented_input(&self) -> DMatrix<f64> {
        let mut b = DMatrix::<f64>::zeros(5, 2);
        b.view_mut((0, 0), (4, 2)).copy_from(&self.jac_input);
        b
    }
}

/// Linearizes the bicycle model at a reference state/input for a step of
/// length `dt`.
pub fn linearize_model(
    state: &VehicleState,
    input: &crate::flatness::VehicleInput,
    dt: f64,
    params: &VehicleParams,
) -> Result<LinearizedStep, ReachError> {
    if input.steer.abs() >= std::f64::consts::FRAC_PI_2 - 1e-6 {
        return Err(ReachError::SteeringSingularity { delta: input.steer });
    }
    assert!(dt > 0.0, "step must be positive");
    let (sin_t, cos_t) = state.theta.sin_cos();
    let tan_d = input.steer.tan();
    let sec2_d = 1.0 + tan_d * tan_d;
    let wb = params.wheelbase;

    // State order (x, y, v, theta).
    #[rustfmt::skip]
    let jac_state = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, cos_t, -state.v * sin_t,
        0.0, 0.0, sin_t,  state.v * cos_t,
        0.0, 0.0, 0.0,    0.0,
        0.0, 0.0, tan_d / wb, 0.0,
    ]);
    #[rustfmt::skip]
    let jac_input = DMatrix::from_row_slice(4, 2, &[
        0.0, 0.0,
        0.0, 0.0,
        1.0, 0.0,
        0.0, state.v * sec2_d / wb,
    ]);
    let f_ref = DVector::from_vec(vec![
        state.v * cos_t,
        state.v * sin_t,
        input.accel,
        state.v * tan_d / wb,
    ]);

    let xi = DVector::from_vec(vec![state.x, state.y, state.v, state.theta]);
    let u = DVector::from_vec(vec![input.accel, input.steer]);
    let a_star = &jac_state * dt;
    let b_star = &jac_input * dt;
    let c_star = &f_ref * dt - &a_star * &xi - &b_star * &u;

    let mut a_step = DMatrix::<f64>::zeros(5, 5);
    a_step.view_mut((0, 0), (4, 4)).copy_from(&a_star);
    a_step.view_mut((0, 4), (4, 1)).copy_from(&c_star);
    let mut b_step = DMatrix::<f64>::zeros(5, 2);
    b_step.view_mut((0, 0), (4, 2)).copy_from(&b_star);

    Ok(LinearizedStep {
        a_step,
        b_step,
        jac_state,
        jac_input,
        f_ref,
        state_ref: *state,
        dt,
    })
}

/// Tube recursion settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TubeParams {
    /// Series order for the step-response terms.
    pub taylor_order: usize,
    /// Generator cap applied after each propagation step.
    pub generator_cap: usize,
    /// Bound the model's second-order linearization error each step. Turning
    /// this off trades soundness for speed.
    pub lagrange_remainder: bool,
    /// Relative tolerance of the containment program.
    pub containment_tol: f64,
    /// Share of the actuation range granted as corrective input spread, on
    /// top of the sensing uncertainty. The reachable sets then answer "can
    /// bounded corrections hold the vehicle near this reference", which is
    /// what separates trackable candidates from jerky ones; zero reduces the
    /// spread to the pure sensing uncertainty.
    pub authority_fraction: f64,
}

impl Default for TubeParams {
    fn default() -> Self {
        TubeParams {
            taylor_order: 6,
            generator_cap: 20,
            lagrange_remainder: true,
            containment_tol: 1e-6,
            authority_fraction: 0.05,
        }
    }
}

/// Time-indexed reachable sets: point sets at the sample times and interval
/// sets covering each step.
#[derive(Debug, Clone)]
pub struct ReachTube {
    pub point_sets: Vec<Zonotope>,
    pub interval_sets: Vec<Zonotope>,
    pub timestamps: Vec<f64>,
    pub step: f64,
}

impl ReachTube {
    /// Center of the point set at sample `k`, projected to the state space.
    pub fn center_state(&self, k: usize) -> VehicleState {
        let c = self.point_sets[k].center();
        VehicleState {
            x: c[0],
            y: c[1],
            v: c[2],
            theta: c[3],
        }
    }
}

/// One step of the zonotope recursion for an affine system.
///
/// `terms` are the propagation operators of the (augmented) continuous
/// matrix, `b_cont` maps inputs into the state space, `input_radius` bounds
/// the per-channel input spread around the reference, and `extra_radius`
/// adds a state-space disturbance box (model error). Returns the next point
/// set and the interval set covering the step.
pub fn linear_tube_step(
    current: &Zonotope,
    terms: &super::TaylorTerms,
    b_cont: &DMatrix<f64>,
    input_radius: &DVector<f64>,
    extra_radius: Option<&DVector<f64>>,
    cap: usize,
) -> (Zonotope, Zonotope) {
    let dim = current.dim();
    // Input response: the perturbation is held constant over a step, so the
    // endpoint response is the truncated series applied to the input set
    // (remainder on its box enclosure). States interior to the step see
    // responses of every partial length and direction; those are covered by
    // the absolute-series box.
    let mut u_gens = Vec::new();
    for j in 0..input_radius.len() {
        let g = b_cont.column(j) * input_radius[j];
        if g.amax() > 0.0 {
            u_gens.push(g.into_owned());
        }
    }
    let input_set = Zonotope::new(DVector::zeros(dim), u_gens);
    let eps_radius = terms.epsilon.radius();
    let response_abs = &terms.gamma_abs + &eps_radius;
    let input_response = input_set
        .linear_map(&terms.gamma_center)
        .add_box(&(&eps_radius * input_set.box_radius()));
    let input_box_radii = &response_abs * input_set.box_radius();
    let extra_response = extra_radius.map(|radii| &response_abs * radii);

    let mut next = current
        .linear_map(&terms.exponential)
        .minkowski_sum(&input_response);
    if let Some(radii) = &extra_response {
        next = next.add_box(radii);
    }
    next = next.reduce(cap);

    // Interval set: chord enclosure plus curvature, input and model error
    // terms.
    let chord_radii =
        &terms.chord_deviation * (current.center().map(|v| v.abs()) + current.box_radius());
    let mut interval = current
        .enclose_with(&next)
        .add_box(&chord_radii)
        .add_box(&input_box_radii);
    if let Some(radii) = &extra_response {
        interval = interval.add_box(radii);
    }
    interval = interval.reduce(cap * 2);
    (next, interval)
}

/// Propagates a tube for an explicitly given affine time-varying system:
/// per-step continuous matrices (augmented if the flow has a constant term),
/// a shared input map and input spread. No model-error term is added.
pub fn propagate_linear_tube(
    a_cont: &[DMatrix<f64>],
    b_cont: &DMatrix<f64>,
    input_radius: &DVector<f64>,
    initial: DVector<f64>,
    step: f64,
    tube_params: &TubeParams,
) -> ReachTube {
    let mut point_sets = vec![Zonotope::point(initial)];
    let mut interval_sets = Vec::with_capacity(a_cont.len());
    let mut timestamps = vec![0.0];
    for (k, a) in a_cont.iter().enumerate() {
        let terms = taylor_terms(a, step, tube_params.taylor_order);
        let (next, interval) = linear_tube_step(
            &point_sets[k],
            &terms,
            b_cont,
            input_radius,
            None,
            tube_params.generator_cap,
        );
        point_sets.push(next);
        interval_sets.push(interval);
        timestamps.push(step * (k + 1) as f64);
    }
    ReachTube {
        point_sets,
        interval_sets,
        timestamps,
        step,
    }
}

/// Propagates the reachable tube along reference samples spaced `step`
/// apart. The initial set is the singleton first sample; each step
/// relinearizes at the reference, maps the set through the affine flow, and
/// accumulates the bounded input spread (sensing uncertainty plus the
/// corrective-authority share) and, when enabled, an interval bound on the
/// linearization error.
pub fn propagate_tube(
    samples: &[FlatSample],
    step: f64,
    params: &VehicleParams,
    tube_params: &TubeParams,
) -> Result<ReachTube, ReachError> {
    if samples.len() < 2 {
        return Err(ReachError::TooFewSamples);
    }
    for (k, w) in samples.windows(2).enumerate() {
        let found = w[1].t - w[0].t;
        if (found - step).abs() > 1e-6 {
            return Err(ReachError::StepMismatch {
                expected: step,
                found,
                step: k,
            });
        }
    }
    let u_box = DVector::from_vec(vec![
        params.input_uncertainty[0] + tube_params.authority_fraction * params.a_max,
        params.input_uncertainty[1] + tube_params.authority_fraction * params.steer_max,
    ]);

    let initial = DVector::from_vec(vec![
        samples[0].state.x,
        samples[0].state.y,
        samples[0].state.v,
        samples[0].state.theta,
        1.0,
    ]);
    let mut point_sets = vec![Zonotope::point(initial)];
    let mut interval_sets = Vec::with_capacity(samples.len() - 1);
    let timestamps: Vec<f64> = samples.iter().map(|s| s.t).collect();

    for k in 0..samples.len() - 1 {
        let lin = linearize_model(&samples[k].state, &samples[k].input, step, params)?;
        let a_cont = lin.augmented_continuous();
        let terms = taylor_terms(&a_cont, step, tube_params.taylor_order);
        let b_cont = lin.augmented_input();
        let current = point_sets[k].clone();

        // Second-order model error, bounded over the step's reachable range
        // by a short fixed-point iteration.
        let mut lagrange_radii: Option<DVector<f64>> = None;
        let mut attempts = 0;
        let (next, interval) = loop {
            let (next, interval) = linear_tube_step(
                &current,
                &terms,
                &b_cont,
                &u_box,
                lagrange_radii.as_ref(),
                tube_params.generator_cap,
            );
            if !tube_params.lagrange_remainder {
                break (next, interval);
            }
            // Deviation of the step's reachable range from the linearization
            // point, per state axis.
            let c = interval.center();
            let r = interval.box_radius();
            let dev_v = (c[2] - samples[k].state.v).abs() + r[2];
            let dev_theta = (c[3] - samples[k].state.theta).abs() + r[3];
            let needed = lagrange_bound(
                dev_v,
                dev_theta,
                u_box[1],
                &samples[k].state,
                &samples[k].input,
                params,
            );
            let current_radii = lagrange_radii.clone().unwrap_or_else(|| DVector::zeros(5));
            let converged = (0..5).all(|i| needed[i] <= current_radii[i] + 1e-12);
            attempts += 1;
            if converged || attempts >= 5 {
                break (next, interval);
            }
            lagrange_radii = Some(needed.map(|v| v * 1.2 + 1e-12));
        };

        interval_sets.push(interval);
        point_sets.push(next);
    }

    Ok(ReachTube {
        point_sets,
        interval_sets,
        timestamps,
        step,
    })
}

/// Componentwise bound on the second-order Taylor error of the bicycle model
/// over deviations (dv, dtheta) in state and ddelta in steering.
fn lagrange_bound(
    dv: f64,
    dtheta: f64,
    ddelta: f64,
    state: &VehicleState,
    input: &crate::flatness::VehicleInput,
    params: &VehicleParams,
) -> DVector<f64> {
    let v_hi = state.v.abs() + dv;
    let delta_max = (input.steer.abs() + ddelta).min(1.4);
    let sec2 = 1.0 / delta_max.cos().powi(2);
    let tan_m = delta_max.tan();
    let wb = params.wheelbase;
    // Position rows: second derivatives bounded by |sin|,|cos| <= 1.
    let pos = 0.5 * (2.0 * dv * dtheta + v_hi * dtheta * dtheta);
    // Heading-rate row: mixed v-delta and pure delta curvature.
    let heading =
        0.5 * (2.0 * dv * ddelta * sec2 / wb + 2.0 * v_hi * sec2 * tan_m * ddelta * ddelta / wb);
    DVector::from_vec(vec![pos, pos, 0.0, heading, 0.0])
}

/// Verdict of the per-sample containment test against the interval sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Feasibility {
    pub high: bool,
    /// First sample index whose state left its interval set.
    pub first_violation: Option<usize>,
}

/// A trajectory has high control feasibility when every sampled reference
/// state lies inside the interval reachable set covering its sample time.
pub fn assess_feasibility(samples: &[FlatSample], tube: &ReachTube, tol: f64) -> Feasibility {
    for (k, sample) in samples.iter().enumerate().skip(1) {
        let state = &sample.state;
        let point = DVector::from_vec(vec![state.x, state.y, state.v, state.theta]);
        if !tube.interval_sets[k - 1].project(4).contains(&point, tol) {
            return Feasibility {
                high: false,
                first_violation: Some(k),
            };
        }
    }
    Feasibility {
        high: true,
        first_violation: None,
    }
}

/// Normalization weights of the deviation score.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeasibilityWeights {
    pub lambda_pos: f64,
    pub lambda_vel: f64,
    pub lambda_heading: f64,
    /// Position normalization (m).
    pub d_ref: f64,
    /// Speed normalization (m/s).
    pub v_ref: f64,
    /// Heading normalization (rad).
    pub theta_ref: f64,
}

impl Default for FeasibilityWeights {
    fn default() -> Self {
        FeasibilityWeights {
            lambda_pos: 1.0,
            lambda_vel: 1.0,
            lambda_heading: 1.0,
            d_ref: 1.0,
            v_ref: 1.0,
            theta_ref: 0.1,
        }
    }
}

/// Deviation score and its components.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JrsScore {
    pub total: f64,
    pub position: f64,
    pub velocity: f64,
    pub heading: f64,
}

/// Mean normalized deviation of the sampled reference states from the
/// reachable-set centers. Smaller means the reference is easier to hold
/// under the bounded input error.
pub fn score_jrs(
    samples: &[FlatSample],
    tube: &ReachTube,
    weights: &FeasibilityWeights,
) -> JrsScore {
    let n = samples.len() - 1;
    let mut position = 0.0;
    let mut velocity = 0.0;
    let mut heading = 0.0;
    for (k, sample) in samples.iter().enumerate().skip(1) {
        let center = tube.point_sets[k].center();
        let state = &sample.state;
        let p_d = ((center[0] - state.x).powi(2) + (center[1] - state.y).powi(2)).sqrt();
        let v_d = (center[2] - state.v).abs();
        let t_d = wrap_angle(center[3] - state.theta).abs();
        position += weights.lambda_pos * p_d / weights.d_ref;
        velocity += weights.lambda_vel * v_d / weights.v_ref;
        heading += weights.lambda_heading * t_d / weights.theta_ref;
    }
    let n = n as f64;
    JrsScore {
        total: (position + velocity + heading) / n,
        position: position / n,
        velocity: velocity / n,
        heading: heading / n,
    }
}
