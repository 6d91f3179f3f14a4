//! End-to-end orchestration: skeleton search, parallel candidate generation
//! and evaluation, selection, tracking validation, and the report files the
//! command-line front end emits.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{
    candidate_metrics, select_trajectory, spearman, strictly_decreasing, CandidateReport,
    EvalContext,
};
use crate::fit::{fit_polyline, FitWeights, PolynomialTrajectory};
use crate::geometry::FrenetPose;
use crate::reach::ReachTube;
use crate::scenario::ScenarioConfig;
use crate::search::{
    build_graph, extract_distinct_skeletons, CollisionContext, SearchProblem, Skeleton,
};
use crate::tracking::{simulate_tracking, tracking_metrics, TrackingMetrics};

/// Wall-clock split between the two planner layers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StageTimings {
    pub upper_ms: f64,
    pub lower_ms: f64,
}

/// One candidate of the sweep: trajectory plus metrics, or the reason it
/// could not be evaluated. Failures are quarantined per candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub skeleton_id: usize,
    pub topo_id: usize,
    pub r_alpha: f64,
    pub trajectory: Option<PolynomialTrajectory>,
    pub report: Option<CandidateReport>,
    pub error: Option<String>,
}

/// Serializable tube snapshot for external plotting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeDump {
    pub skeleton_id: usize,
    pub r_alpha: f64,
    pub timestamps: Vec<f64>,
    /// Point-set centers and generators, projected to (x, y, v, heading).
    pub centers: Vec<Vec<f64>>,
    pub generators: Vec<Vec<Vec<f64>>>,
}

impl TubeDump {
    fn from_tube(tube: &ReachTube, skeleton_id: usize, r_alpha: f64) -> Self {
        let centers = tube
            .point_sets
            .iter()
            .map(|z| z.project(4).center().iter().cloned().collect())
            .collect();
        let generators = tube
            .point_sets
            .iter()
            .map(|z| {
                z.project(4)
                    .generators()
                    .iter()
                    .map(|g| g.iter().cloned().collect())
                    .collect()
            })
            .collect();
        TubeDump {
            skeleton_id,
            r_alpha,
            timestamps: tube.timestamps.clone(),
            centers,
            generators,
        }
    }
}

/// Outcome of a full planning run.
#[derive(Debug, Serialize)]
pub struct PlanOutcome {
    pub skeletons: Vec<Skeleton>,
    pub candidates: Vec<CandidateRecord>,
    /// Index into `candidates` of the selected trajectory.
    pub selected: Option<usize>,
    pub selection_failure: Option<Vec<String>>,
    pub timings: StageTimings,
    #[serde(skip)]
    pub tubes: Vec<TubeDump>,
}

/// Runs the two-layer pipeline on a scenario. `dump_tubes` retains the
/// per-candidate reachable tubes for the debug dump.
pub fn plan(config: &ScenarioConfig, dump_tubes: bool) -> Result<PlanOutcome> {
    let (line, bounds, obstacles) = config.build_world()?;
    let goal = config.goal_resolved();
    let inflation = config.planning_inflation();

    // Upper layer: build the graph and extract distinct skeletons.
    let upper_start = Instant::now();
    let problem = SearchProblem {
        line: &line,
        bounds: &bounds,
        obstacles: &obstacles,
        start: FrenetPose {
            s: config.ego.start_s,
            l: config.ego.start_l,
        },
        goal: FrenetPose {
            s: goal.s,
            l: goal.l,
        },
        goal_window: (goal.t_min, goal.t_max),
        ego_half_width: 0.5 * config.vehicle.width,
        inflation,
    };
    let mut search_params = config.search.clone();
    search_params.seed = config.seed;
    let graph = build_graph(&problem, &search_params, &config.cost_weights)?;
    let ctx = CollisionContext {
        line: &line,
        obstacles: &obstacles,
        inflation,
        dt_check: search_params.dt_check,
    };
    let skeletons = extract_distinct_skeletons(&graph, &ctx, &search_params)?;
    let upper_ms = upper_start.elapsed().as_secs_f64() * 1e3;
    if skeletons.is_empty() {
        return Err(Error::NoFeasibleTrajectory {
            reasons: vec!["no skeleton reaches the goal".into()],
        });
    }

    // Lower layer: fit and evaluate every (skeleton, ratio) pair in parallel.
    let lower_start = Instant::now();
    let jobs: Vec<(usize, f64)> = skeletons
        .iter()
        .enumerate()
        .flat_map(|(i, _)| config.fit.r_alpha_grid.iter().map(move |&r| (i, r)))
        .collect();
    let eval_ctx = EvalContext {
        obstacles: &obstacles,
        params: &config.vehicle,
        feasibility_weights: &config.feasibility,
        tube_params: &config.tube,
        n_rs: config.n_rs,
        r_threshold: config.cost_weights.r_threshold,
        clearance_dt: 0.01,
    };
    let results: Vec<(CandidateRecord, Option<TubeDump>)> = jobs
        .par_iter()
        .map(|&(skeleton_id, r_alpha)| {
            let points = skeletons[skeleton_id].timed_points();
            match fit_polyline(&points, &FitWeights::from_ratio(r_alpha)) {
                Ok(traj) => {
                    match candidate_metrics(&traj, skeleton_id, skeleton_id, r_alpha, &eval_ctx) {
                        Ok((report, tube)) => {
                            let dump = dump_tubes
                                .then(|| TubeDump::from_tube(&tube, skeleton_id, r_alpha));
                            (
                                CandidateRecord {
                                    skeleton_id,
                                    topo_id: skeleton_id,
                                    r_alpha,
                                    trajectory: Some(traj),
                                    report: Some(report),
                                    error: None,
                                },
                                dump,
                            )
                        }
                        Err(e) => (
                            CandidateRecord {
                                skeleton_id,
                                topo_id: skeleton_id,
                                r_alpha,
                                trajectory: Some(traj),
                                report: None,
                                error: Some(e.to_string()),
                            },
                            None,
                        ),
                    }
                }
                Err(e) => (
                    CandidateRecord {
                        skeleton_id,
                        topo_id: skeleton_id,
                        r_alpha,
                        trajectory: None,
                        report: None,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();
    let mut candidates = Vec::with_capacity(results.len());
    let mut tubes = Vec::new();
    for (record, dump) in results {
        if let Some(d) = dump {
            tubes.push(d);
        }
        candidates.push(record);
    }
    let lower_ms = lower_start.elapsed().as_secs_f64() * 1e3;

    // Selection over candidates that produced a report.
    let indexed: Vec<(usize, &CandidateReport)> = candidates
        .iter()
        .enumerate()
        .filter_map(|(i, c)| c.report.as_ref().map(|r| (i, r)))
        .collect();
    let reports: Vec<&CandidateReport> = indexed.iter().map(|(_, r)| *r).collect();
    let (selected, selection_failure) = if reports.is_empty() {
        (
            None,
            Some(candidates.iter().filter_map(|c| c.error.clone()).collect()),
        )
    } else {
        match select_trajectory(&reports) {
            Ok(i) => (Some(indexed[i].0), None),
            Err(Error::NoFeasibleTrajectory { reasons }) => (None, Some(reasons)),
            Err(e) => return Err(e),
        }
    };

    Ok(PlanOutcome {
        skeletons,
        candidates,
        selected,
        selection_failure,
        timings: StageTimings { upper_ms, lower_ms },
        tubes,
    })
}

/// Monotonicity verdicts over a single-skeleton ratio sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepVerdicts {
    pub jerk_cost_strictly_decreasing: bool,
    pub jrs_strictly_decreasing: bool,
}

/// Verdicts for the candidates of one skeleton, ordered by ratio.
pub fn sweep_verdicts(candidates: &[CandidateRecord], skeleton_id: usize) -> SweepVerdicts {
    let mut rows: Vec<&CandidateReport> = candidates
        .iter()
        .filter(|c| c.skeleton_id == skeleton_id)
        .filter_map(|c| c.report.as_ref())
        .collect();
    rows.sort_by(|a, b| a.r_alpha.total_cmp(&b.r_alpha));
    let jerk: Vec<f64> = rows.iter().map(|r| r.jerk_cost).collect();
    let jrs: Vec<f64> = rows.iter().map(|r| r.jrs.total).collect();
    SweepVerdicts {
        jerk_cost_strictly_decreasing: strictly_decreasing(&jerk),
        jrs_strictly_decreasing: strictly_decreasing(&jrs),
    }
}

/// Closed-loop tracking results for one candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingRecord {
    pub skeleton_id: usize,
    pub topo_id: usize,
    pub r_alpha: f64,
    pub jrs_total: Option<f64>,
    pub metrics: Option<TrackingMetrics>,
    pub error: Option<String>,
}

/// Tracks every evaluable candidate and reports the rank correlation between
/// the deviation score and the lateral tracking error.
pub struct TrackOutcome {
    pub records: Vec<TrackingRecord>,
    pub jrs_lateral_rank_correlation: Option<f64>,
}

pub fn track_candidates(config: &ScenarioConfig, candidates: &[CandidateRecord]) -> TrackOutcome {
    let records: Vec<TrackingRecord> = candidates
        .par_iter()
        .map(|c| {
            let jrs_total = c.report.as_ref().map(|r| r.jrs.total);
            match &c.trajectory {
                Some(traj) => match simulate_tracking(traj, &config.tracking, &config.vehicle) {
                    Ok(log) => {
                        match tracking_metrics(&log, traj, &config.tracking, &config.vehicle) {
                            Ok(metrics) => TrackingRecord {
                                skeleton_id: c.skeleton_id,
                                topo_id: c.topo_id,
                                r_alpha: c.r_alpha,
                                jrs_total,
                                metrics: Some(metrics),
                                error: None,
                            },
                            Err(e) => record_error(c, jrs_total, e.to_string()),
                        }
                    }
                    Err(e) => record_error(c, jrs_total, e.to_string()),
                },
                None => record_error(c, jrs_total, "no trajectory".into()),
            }
        })
        .collect();
    let paired: Vec<(f64, f64)> = records
        .iter()
        .filter_map(|r| match (r.jrs_total, &r.metrics) {
            (Some(j), Some(m)) => Some((j, m.lateral_rmse)),
            _ => None,
        })
        .collect();
    let correlation = (paired.len() >= 3).then(|| {
        let xs: Vec<f64> = paired.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = paired.iter().map(|p| p.1).collect();
        spearman(&xs, &ys)
    });
    TrackOutcome {
        records,
        jrs_lateral_rank_correlation: correlation,
    }
}

fn record_error(c: &CandidateRecord, jrs_total: Option<f64>, error: String) -> TrackingRecord {
    TrackingRecord {
        skeleton_id: c.skeleton_id,
        topo_id: c.topo_id,
        r_alpha: c.r_alpha,
        jrs_total,
        metrics: None,
        error: Some(error),
    }
}

// --- report files -----------------------------------------------------

pub const CANDIDATES_SCHEMA: &str = "candidates-v1";
pub const TRACKING_SCHEMA: &str = "tracking-v1";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "inf".to_string(),
    }
}

/// `skeletons.json`: the distinct skeletons with costs and term breakdowns.
pub fn write_skeletons_json(path: &Path, skeletons: &[Skeleton]) -> Result<()> {
    let text = serde_json::to_string_pretty(skeletons).expect("skeletons serialize");
    std::fs::write(path, text)?;
    Ok(())
}

/// `candidates.csv`: one row per candidate, schema version in the header.
pub fn write_candidates_csv(path: &Path, candidates: &[CandidateRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema={CANDIDATES_SCHEMA}\n"));
    out.push_str(
        "skeleton_id,topo_id,r_alpha,collision,d_obs_min,r_o,len_m,duration_s,\
         j_p,j_v,j_theta,j_rs,j_s,j_steer_rate,feasible,first_violation,error\n",
    );
    for c in candidates {
        match &c.report {
            Some(r) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},\n",
                r.skeleton_id,
                r.topo_id,
                r.r_alpha,
                if r.collision { "Y" } else { "N" },
                fmt_opt(r.d_obs_min),
                r.r_o,
                r.length,
                r.duration,
                r.jrs.position,
                r.jrs.velocity,
                r.jrs.heading,
                r.jrs.total,
                r.jerk_cost,
                r.steer_rate_cost,
                if r.feasible { "high" } else { "low" },
                r.first_violation.map(|v| v.to_string()).unwrap_or_default(),
            )),
            None => out.push_str(&format!(
                "{},{},{},,,,,,,,,,,,,,{}\n",
                c.skeleton_id,
                c.topo_id,
                c.r_alpha,
                c.error.as_deref().unwrap_or("unknown"),
            )),
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}

/// `candidates.json`: full candidate records including trajectory
/// coefficients, consumed by the tracking command.
pub fn write_candidates_json(path: &Path, candidates: &[CandidateRecord]) -> Result<()> {
    let text = serde_json::to_string_pretty(candidates).expect("candidates serialize");
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_candidates_json(path: &Path) -> Result<Vec<CandidateRecord>> {
    let text = std::fs::read_to_string(path)?;
    let records: Vec<CandidateRecord> = serde_json::from_str(&text)
        .map_err(crate::error::ScenarioError::Parse)
        .map_err(Error::Scenario)?;
    Ok(records)
}

/// `selected.json`: the chosen candidate's record.
pub fn write_selected_json(path: &Path, record: &CandidateRecord) -> Result<()> {
    let text = serde_json::to_string_pretty(record).expect("record serialize");
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_selected_json(path: &Path) -> Result<CandidateRecord> {
    let text = std::fs::read_to_string(path)?;
    let record: CandidateRecord = serde_json::from_str(&text)
        .map_err(crate::error::ScenarioError::Parse)
        .map_err(Error::Scenario)?;
    Ok(record)
}

/// `tubes.json`: reachable-set dump for external plotting.
pub fn write_tubes_json(path: &Path, tubes: &[TubeDump]) -> Result<()> {
    let text = serde_json::to_string(tubes).expect("tubes serialize");
    std::fs::write(path, text)?;
    Ok(())
}

/// `tracking.csv`: closed-loop metrics per candidate.
pub fn write_tracking_csv(path: &Path, records: &[TrackingRecord]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# schema={TRACKING_SCHEMA}\n"));
    out.push_str("skeleton_id,topo_id,r_alpha,j_rs,e_l,e_p,e_theta,omega_m,error\n");
    for r in records {
        match &r.metrics {
            Some(m) => out.push_str(&format!(
                "{},{},{},{},{},{},{},{},\n",
                r.skeleton_id,
                r.topo_id,
                r.r_alpha,
                fmt_opt(r.jrs_total),
                m.lateral_rmse,
                m.position_rmse,
                m.heading_rmse,
                m.mean_yaw_rate,
            )),
            None => out.push_str(&format!(
                "{},{},{},{},,,,,{}\n",
                r.skeleton_id,
                r.topo_id,
                r.r_alpha,
                fmt_opt(r.jrs_total),
                r.error.as_deref().unwrap_or("unknown"),
            )),
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(out.as_bytes())?;
    Ok(())
}
