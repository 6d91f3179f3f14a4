//! Candidate metric computation, screening and final selection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, FlatnessError};
use crate::fit::PolynomialTrajectory;
use crate::flatness::{recover_states_inputs, VehicleParams};
use crate::geometry::{min_obstacle_distance, ObstacleTrajectory};
use crate::reach::{
    assess_feasibility, propagate_tube, score_jrs, FeasibilityWeights, JrsScore, ReachTube,
    TubeParams,
};

/// Everything candidate evaluation needs besides the trajectory itself.
pub struct EvalContext<'a> {
    pub obstacles: &'a [ObstacleTrajectory],
    pub params: &'a VehicleParams,
    pub feasibility_weights: &'a FeasibilityWeights,
    pub tube_params: &'a TubeParams,
    /// Number of reachability steps across the trajectory duration.
    pub n_rs: usize,
    /// Clearance threshold for the exposure ratio (m).
    pub r_threshold: f64,
    /// Sampling step for clearance evaluation (s).
    pub clearance_dt: f64,
}

/// Per-candidate metrics record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateReport {
    pub skeleton_id: usize,
    pub topo_id: usize,
    pub r_alpha: f64,
    pub collision: bool,
    /// Minimum footprint distance to any obstacle; absent without obstacles.
    pub d_obs_min: Option<f64>,
    /// Fraction of arc length closer to an obstacle than the threshold.
    pub r_o: f64,
    pub length: f64,
    pub duration: f64,
    /// Integrated squared jerk.
    pub jerk_cost: f64,
    /// Mean absolute steering rate (rad/s).
    pub steer_rate_cost: f64,
    pub jrs: JrsScore,
    pub feasible: bool,
    pub first_violation: Option<usize>,
}

/// Computes the full metric record for one candidate trajectory.
pub fn candidate_metrics(
    traj: &PolynomialTrajectory,
    skeleton_id: usize,
    topo_id: usize,
    r_alpha: f64,
    ctx: &EvalContext,
) -> Result<(CandidateReport, ReachTube), Error> {
    let duration = traj.duration();
    let length = traj.arc_length();

    // Clearance sweep with the full footprint.
    let clearance_samples = {
        let n = ((duration / ctx.clearance_dt).ceil() as usize).max(2);
        let mut out = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = duration * k as f64 / n as f64;
            let pos = traj.position(t);
            let vel = traj.velocity(t);
            out.push((t, pos.x, pos.y, vel.y.atan2(vel.x)));
        }
        out
    };
    let clearance = min_obstacle_distance(
        &clearance_samples,
        ctx.params.length,
        ctx.params.width,
        ctx.obstacles,
        ctx.r_threshold,
    );

    // States and inputs along the trajectory for steering and tube metrics.
    let step = duration / ctx.n_rs as f64;
    let samples = recover_states_inputs(traj, step, ctx.params).map_err(flatness_error)?;
    let fine = recover_states_inputs(traj, (duration / 400.0).min(0.01), ctx.params)
        .map_err(flatness_error)?;
    let mut steer_variation = 0.0;
    for w in fine.windows(2) {
        steer_variation += (w[1].input.steer - w[0].input.steer).abs();
    }

    let tube = propagate_tube(&samples, step, ctx.params, ctx.tube_params)?;
    let feas = assess_feasibility(&samples, &tube, ctx.tube_params.containment_tol);
    let jrs = score_jrs(&samples, &tube, ctx.feasibility_weights);

    let report = CandidateReport {
        skeleton_id,
        topo_id,
        r_alpha,
        collision: clearance.min_distance <= 0.0,
        d_obs_min: clearance
            .min_distance
            .is_finite()
            .then_some(clearance.min_distance),
        r_o: clearance.below_threshold_fraction,
        length,
        duration,
        jerk_cost: traj.jerk_energy(),
        steer_rate_cost: steer_variation / duration,
        jrs,
        feasible: feas.high,
        first_violation: feas.first_violation,
    };
    Ok((report, tube))
}

fn flatness_error(e: FlatnessError) -> Error {
    Error::Flatness(e)
}

/// Picks the overtaking trajectory: among collision-free, high-feasibility
/// candidates, the smallest deviation score wins; ties break on smaller jerk
/// cost, then smaller ratio.
pub fn select_trajectory(reports: &[&CandidateReport]) -> Result<usize, Error> {
    let mut best: Option<usize> = None;
    for (i, report) in reports.iter().enumerate() {
        if report.collision || !report.feasible {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let other = reports[b];
                report
                    .jrs
                    .total
                    .total_cmp(&other.jrs.total)
                    .then(report.jerk_cost.total_cmp(&other.jerk_cost))
                    .then(report.r_alpha.total_cmp(&other.r_alpha))
                    .is_lt()
            }
        };
        if better {
            best = Some(i);
        }
    }
    best.ok_or_else(|| Error::NoFeasibleTrajectory {
        reasons: reports
            .iter()
            .map(|r| {
                let why = if r.collision {
                    "collision".to_string()
                } else if !r.feasible {
                    match r.first_violation {
                        Some(k) => format!("low feasibility (first violation at sample {k})"),
                        None => "low feasibility".to_string(),
                    }
                } else {
                    unreachable!("passing candidate cannot be rejected")
                };
                format!(
                    "skeleton {} topo {} r_alpha {}: {}",
                    r.skeleton_id, r.topo_id, r.r_alpha, why
                )
            })
            .collect(),
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Whether the sequence decreases strictly at every step.
pub fn strictly_decreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector2;

    fn report(
        r_alpha: f64,
        collision: bool,
        feasible: bool,
        jrs: f64,
        jerk: f64,
    ) -> CandidateReport {
        CandidateReport {
            skeleton_id: 0,
            topo_id: 0,
            r_alpha,
            collision,
            d_obs_min: if collision { Some(0.0) } else { Some(0.5) },
            r_o: 0.0,
            length: 40.0,
            duration: 3.0,
            jerk_cost: jerk,
            steer_rate_cost: 1.0,
            jrs: JrsScore {
                total: jrs,
                position: jrs,
                velocity: 0.0,
                heading: 0.0,
            },
            feasible,
            first_violation: if feasible { None } else { Some(3) },
        }
    }

    #[test]
    fn sweep_selection_matches_screening_rules() {
        // Low ratio fails feasibility, high ratios collide; the clean middle
        // candidate with the smallest deviation score wins.
        let reports = [
            report(0.0, false, false, 0.667, 567.0),
            report(0.005, false, true, 0.396, 217.0),
            report(0.015, false, true, 0.280, 102.0),
            report(0.025, true, true, 0.223, 61.0),
            report(0.1, true, true, 0.115, 12.0),
        ];
        let refs: Vec<&CandidateReport> = reports.iter().collect();
        let selected = select_trajectory(&refs).unwrap();
        assert_eq!(reports[selected].r_alpha, 0.015);
    }

    #[test]
    fn single_clean_candidate_is_selected() {
        let reports = [report(0.01, false, true, 0.5, 10.0)];
        let refs: Vec<&CandidateReport> = reports.iter().collect();
        assert_eq!(select_trajectory(&refs).unwrap(), 0);
    }

    #[test]
    fn all_colliding_reports_error_with_reasons() {
        let reports = [
            report(0.01, true, true, 0.5, 10.0),
            report(0.05, true, true, 0.3, 5.0),
        ];
        let refs: Vec<&CandidateReport> = reports.iter().collect();
        let err = select_trajectory(&refs).unwrap_err();
        match err {
            Error::NoFeasibleTrajectory { reasons } => {
                assert_eq!(reasons.len(), 2);
                assert!(reasons.iter().all(|r| r.contains("collision")));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn selection_is_associative_across_classes() {
        // Global argmin equals argmin over per-class winners.
        let mut reports = Vec::new();
        for topo in 0..3 {
            for (i, jrs) in [0.5, 0.4, 0.3].iter().enumerate() {
                let mut r = report(
                    0.01 * (i + 1) as f64,
                    false,
                    true,
                    jrs + topo as f64 * 0.05,
                    10.0,
                );
                r.topo_id = topo;
                reports.push(r);
            }
        }
        let refs: Vec<&CandidateReport> = reports.iter().collect();
        let global = select_trajectory(&refs).unwrap();
        let mut class_winners = Vec::new();
        for topo in 0..3 {
            let class: Vec<&CandidateReport> =
                reports.iter().filter(|r| r.topo_id == topo).collect();
            let w = select_trajectory(&class).unwrap();
            class_winners.push(class[w].clone());
        }
        let winner_refs: Vec<&CandidateReport> = class_winners.iter().collect();
        let across = select_trajectory(&winner_refs).unwrap();
        assert_eq!(reports[global].jrs.total, class_winners[across].jrs.total);
    }

    #[test]
    fn straight_candidate_has_zero_smoothness_costs() {
        let knots = vec![0.0, 1.5, 3.0];
        let states: Vec<_> = knots
            .iter()
            .map(|&t| {
                (
                    Vector2::new(12.0 * t, 0.0),
                    Vector2::new(12.0, 0.0),
                    Vector2::zeros(),
                )
            })
            .collect();
        let traj = PolynomialTrajectory::from_hermite_data(&knots, &states).unwrap();
        let params = VehicleParams::default();
        let weights = FeasibilityWeights::default();
        let tube_params = TubeParams::default();
        let ctx = EvalContext {
            obstacles: &[],
            params: &params,
            feasibility_weights: &weights,
            tube_params: &tube_params,
            n_rs: 15,
            r_threshold: 0.1,
            clearance_dt: 0.01,
        };
        let (report, _) = candidate_metrics(&traj, 0, 0, 0.0, &ctx).unwrap();
        assert!(report.jerk_cost < 1e-9);
        assert!(report.steer_rate_cost < 1e-9);
        assert!(report.d_obs_min.is_none());
        assert!(!report.collision);
        assert!(report.feasible);
        assert_relative_eq!(report.length, 36.0, epsilon = 1e-3);
    }

    #[test]
    fn spearman_detects_monotone_association() {
        let xs = [0.667, 0.396, 0.326, 0.280, 0.223, 0.158, 0.115];
        let ys = [0.124, 0.084, 0.068, 0.058, 0.044, 0.028, 0.016];
        assert_relative_eq!(spearman(&xs, &ys), 1.0, epsilon = 1e-12);
        let flipped: Vec<f64> = ys.iter().rev().cloned().collect();
        assert_relative_eq!(spearman(&xs, &flipped), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_handles_ties_with_average_ranks() {
        let xs = [1.0, 2.0, 2.0, 3.0];
        let ys = [1.0, 2.5, 2.5, 4.0];
        assert_relative_eq!(spearman(&xs, &ys), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn monotonicity_verdict_flags_injected_fault() {
        assert!(strictly_decreasing(&[5.0, 4.0, 2.0, 1.0]));
        assert!(!strictly_decreasing(&[5.0, 4.0, 4.5, 1.0]));
        assert!(!strictly_decreasing(&[5.0, 5.0, 4.0]));
    }
}
