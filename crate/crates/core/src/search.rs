//! Upper-layer planner: layered space-time graph construction over the road,
//! bounded skeleton enumeration under a five-term cost, and extraction of the
//! lowest-cost, pairwise topologically distinct skeletons.
//!
//! Moving vehicles become static volumes in (s, l, t). Layer nodes sit on
//! equally spaced longitudinal slices with lateral and arrival-time sampling;
//! link nodes are seeded random samples between slices that bridge node pairs
//! whose direct connection an obstacle blocks. Enumeration keeps a bounded
//! number of cheapest partial skeletons per node, bucketed by the
//! obstacle-passing signature so that no topology class is starved before it
//! reaches the goal.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SearchError;
use crate::geometry::{
    segment_visible, Centerline, FrenetPose, ObstacleTrajectory, RoadBounds, SltPoint,
};

/// Everything visibility-related queries need.
#[derive(Clone, Copy)]
pub struct CollisionContext<'a> {
    pub line: &'a Centerline,
    pub obstacles: &'a [ObstacleTrajectory],
    /// Total footprint inflation for point-vs-rectangle tests
    /// (planning margin plus ego half-diagonal).
    pub inflation: f64,
    /// Time step for sampling visibility segments.
    pub dt_check: f64,
}

/// Weights of the five skeleton cost terms plus the quantities their
/// normalizations need.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostWeights {
    pub time: f64,
    pub bend: f64,
    pub length: f64,
    pub accel: f64,
    pub obstacle: f64,
    /// Clearance threshold below which the obstacle term activates (m).
    pub r_threshold: f64,
    /// Speed limit used for reference times and reachability (m/s).
    pub v_max: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            time: 1.0,
            bend: 1.0,
            length: 1.0,
            accel: 1.0,
            obstacle: 1.0,
            r_threshold: 0.1,
            v_max: 15.0,
        }
    }
}

/// Sampling and enumeration parameters of the graph search.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchParams {
    /// Longitudinal layer spacing (m).
    pub ds: f64,
    /// Lateral sample spacing (m).
    pub dl: f64,
    /// Arrival-time sample spacing (s).
    pub dt: f64,
    /// Random link-node samples per layer gap.
    pub link_samples: usize,
    /// Partial skeletons retained per node and passing signature.
    pub k_best: usize,
    /// Number of distinct skeletons to extract.
    pub n_skeletons: usize,
    /// Extra clearance margin on top of the ego half-diagonal (m).
    pub margin: f64,
    /// Visibility sampling step (s).
    pub dt_check: f64,
    /// Layer time windows span [t_min, t_min * (1 + factor)].
    pub time_window_factor: f64,
    /// Lateral band kept clear of the road edge; defaults to the ego half
    /// width when absent.
    pub lateral_keepout: Option<f64>,
    /// Uniform samples for the exact obstacle proximity cost.
    pub obstacle_cost_samples: usize,
    /// Matched-parameter sampling step for topology comparison (m).
    pub uvd_ds: f64,
    /// Seed for link-node sampling.
    pub seed: u64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            ds: 5.0,
            dl: 0.9,
            dt: 0.4,
            link_samples: 24,
            k_best: 32,
            n_skeletons: 3,
            margin: 0.2,
            dt_check: 0.05,
            time_window_factor: 1.0,
            lateral_keepout: None,
            obstacle_cost_samples: 10,
            uvd_ds: 0.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Layer,
    Link,
}

/// A search-graph node with both road and Cartesian coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GraphNode {
    pub slt: SltPoint,
    pub x: f64,
    pub y: f64,
    pub kind: NodeKind,
    pub layer_index: usize,
}

/// An edge between adjacent layers, optionally routed through a link node.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    pub from: usize,
    pub via: Option<usize>,
    pub to: usize,
}

/// Per-term cost breakdown of a skeleton.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CostTerms {
    pub time: f64,
    pub bend: f64,
    pub length: f64,
    pub accel: f64,
    pub obstacle: f64,
    /// Bend terms skipped because consecutive nodes coincided.
    pub degenerate_angles: usize,
}

/// A point of a finished skeleton.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SkeletonPoint {
    pub slt: SltPoint,
    pub x: f64,
    pub y: f64,
}

/// Collision-free space-time polyline from start to goal with its cost.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Skeleton {
    pub points: Vec<SkeletonPoint>,
    pub cost: f64,
    pub terms: CostTerms,
    /// Obstacle-passing signature accumulated during enumeration (per
    /// obstacle: 0 not passed, 1 left, 2 right, base-3 encoded).
    #[serde(default)]
    pub signature: u64,
}

impl Skeleton {
    /// (time, Cartesian position) sequence for the trajectory fit.
    pub fn timed_points(&self) -> Vec<(f64, Vector2<f64>)> {
        self.points
            .iter()
            .map(|p| (p.slt.t, Vector2::new(p.x, p.y)))
            .collect()
    }

    pub fn arrival_time(&self) -> f64 {
        self.points.last().unwrap().slt.t
    }
}

/// Planar distance in road coordinates.
pub fn slt_distance(a: SltPoint, b: SltPoint) -> f64 {
    ((b.s - a.s).powi(2) + (b.l - a.l).powi(2)).sqrt()
}

/// Whether `b` can be reached from `a` without exceeding the speed limit.
pub fn is_reachable(a: SltPoint, b: SltPoint, v_max: f64) -> bool {
    b.t > a.t && b.t - a.t + 1e-9 >= slt_distance(a, b) / v_max
}

/// Exact five-term skeleton cost.
///
/// The obstacle term measures the clearance left beyond the inflated
/// footprint envelope at uniformly spaced samples along the polyline.
pub fn skeleton_cost(
    points: &[SkeletonPoint],
    weights: &CostWeights,
    ctx: &CollisionContext,
    obstacle_samples: usize,
) -> Result<(f64, CostTerms), SearchError> {
    if points.len() < 2 {
        return Err(SearchError::BadParams(
            "skeleton needs at least 2 nodes".into(),
        ));
    }
    let first = points[0].slt;
    let last = points[points.len() - 1].slt;
    let endpoint_dist = slt_distance(first, last);
    if endpoint_dist <= 1e-9 {
        return Err(SearchError::BadParams("skeleton endpoints coincide".into()));
    }
    let t_ref = endpoint_dist / weights.v_max;
    let arrival = last.t - first.t;

    let mut terms = CostTerms {
        time: arrival / t_ref,
        ..CostTerms::default()
    };

    let mut total_len = 0.0;
    for w in points.windows(2) {
        total_len += slt_distance(w[0].slt, w[1].slt);
    }
    terms.length = total_len / endpoint_dist;

    // Bend and acceleration over interior nodes.
    let mut acc_values = Vec::new();
    for i in 1..points.len() - 1 {
        let prev = points[i - 1].slt;
        let here = points[i].slt;
        let next = points[i + 1].slt;
        let v1 = Vector2::new(here.s - prev.s, here.l - prev.l);
        let v2 = Vector2::new(next.s - here.s, next.l - here.l);
        let n1 = v1.norm();
        let n2 = v2.norm();
        if n1 < 1e-9 || n2 < 1e-9 {
            terms.degenerate_angles += 1;
        } else {
            let cos = (v1.dot(&v2) / (n1 * n2)).clamp(-1.0, 1.0);
            terms.bend += cos.acos() / std::f64::consts::PI;
        }
        let dt0 = here.t - prev.t;
        let dt1 = next.t - here.t;
        if dt0 > 0.0 && dt1 > 0.0 {
            acc_values.push(2.0 * (n2 / dt1 - n1 / dt0) / (dt0 + dt1));
        }
    }
    if !acc_values.is_empty() {
        let n = acc_values.len() as f64;
        let mean = acc_values.iter().sum::<f64>() / n;
        let var = acc_values.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        terms.accel = var.sqrt();
    }

    // Obstacle proximity penalty at uniform arc-length samples.
    if !ctx.obstacles.is_empty() && obstacle_samples > 0 {
        let m = obstacle_samples;
        let mut cumulative = vec![0.0];
        for w in points.windows(2) {
            cumulative.push(cumulative.last().unwrap() + slt_distance(w[0].slt, w[1].slt));
        }
        let mut penalty = 0.0;
        for i in 0..m {
            let u = total_len * (i as f64 + 0.5) / m as f64;
            let seg = cumulative
                .partition_point(|&c| c <= u)
                .clamp(1, points.len() - 1);
            let span = cumulative[seg] - cumulative[seg - 1];
            let alpha = if span > 0.0 {
                (u - cumulative[seg - 1]) / span
            } else {
                0.0
            };
            let a = points[seg - 1].slt;
            let b = points[seg].slt;
            let sample = SltPoint {
                s: a.s + (b.s - a.s) * alpha,
                l: a.l + (b.l - a.l) * alpha,
                t: a.t + (b.t - a.t) * alpha,
            };
            let clearance = clearance_at(sample, ctx);
            penalty += (weights.r_threshold - clearance.min(weights.r_threshold))
                / (m as f64 * weights.r_threshold);
        }
        terms.obstacle = penalty;
    }

    let cost = weights.time * terms.time
        + weights.bend * terms.bend
        + weights.length * terms.length
        + weights.accel * terms.accel
        + weights.obstacle * terms.obstacle;
    Ok((cost, terms))
}

/// Clearance beyond the inflated envelope at one space-time sample.
fn clearance_at(sample: SltPoint, ctx: &CollisionContext) -> f64 {
    let Ok(point) = ctx.line.frenet_to_cartesian(FrenetPose {
        s: sample.s,
        l: sample.l,
    }) else {
        return f64::INFINITY;
    };
    let mut best = f64::INFINITY;
    for obstacle in ctx.obstacles {
        let d = obstacle.footprint_at(sample.t).distance_to_point(point) - ctx.inflation;
        best = best.min(d.max(0.0));
    }
    best
}

/// Uniform-visibility test of topological equivalence: both skeletons are
/// sampled at matched normalized longitudinal progress and every connecting
/// space-time segment must stay unobstructed.
///
/// Skeletons advance monotonically along the road and share their endpoints,
/// so progress matching puts corresponding samples at the same arc length:
/// each connecting segment is a lateral/temporal transition at fixed s,
/// which is exactly what separates passing sides and passing times without
/// being fooled by differently paced detours.
pub fn uvd_equivalent(
    a: &Skeleton,
    b: &Skeleton,
    ctx: &CollisionContext,
    ds: f64,
) -> Result<bool, SearchError> {
    let endpoints_match = |p: &SkeletonPoint, q: &SkeletonPoint| {
        (p.slt.s - q.slt.s).abs() < 1e-6 && (p.slt.l - q.slt.l).abs() < 1e-6
    };
    if !endpoints_match(&a.points[0], &b.points[0])
        || !endpoints_match(a.points.last().unwrap(), b.points.last().unwrap())
    {
        return Err(SearchError::MismatchedEndpoints);
    }
    let len_a = polyline_length(&a.points);
    let len_b = polyline_length(&b.points);
    let n = ((len_a.max(len_b) / ds).ceil() as usize).max(2);
    for k in 0..=n {
        let u = k as f64 / n as f64;
        let pa = sample_at_progress(&a.points, u);
        let pb = sample_at_progress(&b.points, u);
        if connecting_segment_blocked(pa, pb, ctx, ds) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn polyline_length(points: &[SkeletonPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| slt_distance(w[0].slt, w[1].slt))
        .sum()
}

fn sample_at_progress(points: &[SkeletonPoint], u: f64) -> SltPoint {
    let s0 = points[0].slt.s;
    let s1 = points.last().unwrap().slt.s;
    let target = s0 + (s1 - s0) * u;
    for w in points.windows(2) {
        if w[1].slt.s >= target {
            let span = w[1].slt.s - w[0].slt.s;
            let alpha = if span > 0.0 {
                ((target - w[0].slt.s) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            return SltPoint {
                s: target,
                l: w[0].slt.l + (w[1].slt.l - w[0].slt.l) * alpha,
                t: w[0].slt.t + (w[1].slt.t - w[0].slt.t) * alpha,
            };
        }
    }
    points.last().unwrap().slt
}

/// Samples the straight space-time segment between two matched points and
/// reports whether any sample falls inside an inflated footprint at its
/// interpolated time.
fn connecting_segment_blocked(a: SltPoint, b: SltPoint, ctx: &CollisionContext, ds: f64) -> bool {
    let dist = slt_distance(a, b);
    let n = ((dist / (0.5 * ds)).ceil() as usize).max(1);
    for k in 0..=n {
        let alpha = k as f64 / n as f64;
        let sample = SltPoint {
            s: a.s + (b.s - a.s) * alpha,
            l: a.l + (b.l - a.l) * alpha,
            t: a.t + (b.t - a.t) * alpha,
        };
        let Ok(point) = ctx.line.frenet_to_cartesian(FrenetPose {
            s: sample.s,
            l: sample.l,
        }) else {
            return true;
        };
        for obstacle in ctx.obstacles {
            if obstacle
                .footprint_at(sample.t)
                .contains_point(point, ctx.inflation)
            {
                return true;
            }
        }
    }
    false
}

/// Obstacle track resampled into road coordinates for passing-side tests.
struct FrenetTrack {
    dt: f64,
    t0: f64,
    samples: Vec<(f64, f64)>, // (s, l)
}

impl FrenetTrack {
    fn build(obstacle: &ObstacleTrajectory, line: &Centerline, t_max: f64, dt: f64) -> Self {
        let n = (t_max / dt).ceil() as usize + 1;
        let tol = 1e6; // projection always resolves; far-off obstacles clamp
        let samples = (0..=n)
            .map(|k| {
                let t = k as f64 * dt;
                let (pose, _) = obstacle.pose_at(t);
                match line.cartesian_to_frenet(Vector2::new(pose.x, pose.y), tol) {
                    Ok(f) => (f.s, f.l),
                    Err(_) => (f64::NAN, f64::NAN),
                }
            })
            .collect();
        FrenetTrack {
            dt,
            t0: 0.0,
            samples,
        }
    }

    fn at(&self, t: f64) -> (f64, f64) {
        let idx = ((t - self.t0) / self.dt).max(0.0);
        let i = (idx.floor() as usize).min(self.samples.len() - 1);
        let j = (i + 1).min(self.samples.len() - 1);
        let alpha = (idx - i as f64).clamp(0.0, 1.0);
        let (s0, l0) = self.samples[i];
        let (s1, l1) = self.samples[j];
        (s0 + (s1 - s0) * alpha, l0 + (l1 - l0) * alpha)
    }
}

/// Bounded partial skeleton with incrementally maintained cost terms.
#[derive(Debug, Clone)]
struct Partial {
    nodes: Vec<usize>,
    arrival: f64,
    length: f64,
    bend_sum: f64,
    acc_sum: f64,
    acc_sq_sum: f64,
    acc_count: usize,
    obstacle_penalty: f64,
    obstacle_samples: usize,
    signature: u64,
}

impl Partial {
    fn seed(start_id: usize) -> Self {
        Partial {
            nodes: vec![start_id],
            arrival: 0.0,
            length: 0.0,
            bend_sum: 0.0,
            acc_sum: 0.0,
            acc_sq_sum: 0.0,
            acc_count: 0,
            obstacle_penalty: 0.0,
            obstacle_samples: 0,
            signature: 0,
        }
    }

    /// Ranking cost: same five-term structure evaluated on the partial
    /// polyline, with the obstacle term accumulated from per-edge samples.
    fn ranking_cost(&self, start: SltPoint, here: SltPoint, weights: &CostWeights) -> f64 {
        let endpoint = slt_distance(start, here).max(1e-6);
        let t_ref = endpoint / weights.v_max;
        let time = (here.t - start.t) / t_ref;
        let length = self.length / endpoint;
        let accel = if self.acc_count > 0 {
            let n = self.acc_count as f64;
            let mean = self.acc_sum / n;
            (self.acc_sq_sum / n - mean * mean).max(0.0).sqrt()
        } else {
            0.0
        };
        let obstacle = if self.obstacle_samples > 0 {
            self.obstacle_penalty / self.obstacle_samples as f64
        } else {
            0.0
        };
        weights.time * time
            + weights.bend * self.bend_sum
            + weights.length * length
            + weights.accel * accel
            + weights.obstacle * obstacle
    }
}

/// Layered space-time graph plus the enumerated goal skeletons.
pub struct SearchGraph {
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<Edge>,
    pub goal_nodes: Vec<usize>,
    /// Full skeletons reaching the goal, sorted ascending by cost.
    pub skeletons: Vec<Skeleton>,
    pub effective_ds: f64,
    pub direct_edge_count: usize,
    pub link_edge_count: usize,
    incoming: Vec<Vec<usize>>,
    outgoing: Vec<Vec<usize>>,
}

impl SearchGraph {
    /// Edge indices ending at `node`.
    pub fn edges_in(&self, node: usize) -> &[usize] {
        &self.incoming[node]
    }

    /// Edge indices starting from `node`.
    pub fn edges_out(&self, node: usize) -> &[usize] {
        &self.outgoing[node]
    }
}

/// Inputs describing one search problem.
pub struct SearchProblem<'a> {
    pub line: &'a Centerline,
    pub bounds: &'a RoadBounds,
    pub obstacles: &'a [ObstacleTrajectory],
    pub start: FrenetPose,
    pub goal: FrenetPose,
    pub goal_window: (f64, f64),
    /// Ego half width, used for the default lateral keepout.
    pub ego_half_width: f64,
    /// Planning inflation: margin + ego half-diagonal.
    pub inflation: f64,
}

/// Builds the layered graph and enumerates goal skeletons.
pub fn build_graph(
    problem: &SearchProblem,
    params: &SearchParams,
    weights: &CostWeights,
) -> Result<SearchGraph, SearchError> {
    if params.ds <= 0.0 || params.dl <= 0.0 || params.dt <= 0.0 {
        return Err(SearchError::BadParams(
            "sampling steps must be positive".into(),
        ));
    }
    let span = problem.goal.s - problem.start.s;
    if span <= 0.0 {
        return Err(SearchError::BadParams(
            "goal must lie ahead of the start".into(),
        ));
    }
    if problem.goal_window.1 < problem.goal_window.0 {
        return Err(SearchError::BadParams(
            "goal time window is inverted".into(),
        ));
    }
    let n_layers = (span / params.ds).round().max(1.0) as usize;
    let effective_ds = span / n_layers as f64;
    let keepout = params.lateral_keepout.unwrap_or(problem.ego_half_width);
    let lateral_max = problem.bounds.half_width - keepout;
    if lateral_max <= 0.0 {
        return Err(SearchError::BadParams(
            "road too narrow for the keepout".into(),
        ));
    }
    let ctx = CollisionContext {
        line: problem.line,
        obstacles: problem.obstacles,
        inflation: problem.inflation,
        dt_check: params.dt_check,
    };

    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut layers: Vec<Vec<usize>> = Vec::with_capacity(n_layers + 1);
    let push_node = |nodes: &mut Vec<GraphNode>, slt: SltPoint, kind: NodeKind, layer: usize| {
        let point = problem
            .line
            .frenet_to_cartesian(FrenetPose { s: slt.s, l: slt.l })
            .unwrap_or_else(|_| Vector2::new(f64::NAN, f64::NAN));
        nodes.push(GraphNode {
            slt,
            x: point.x,
            y: point.y,
            kind,
            layer_index: layer,
        });
        nodes.len() - 1
    };

    // Layer 0: the start node at t = 0.
    let start_slt = SltPoint {
        s: problem.start.s,
        l: problem.start.l,
        t: 0.0,
    };
    let start_id = push_node(&mut nodes, start_slt, NodeKind::Layer, 0);
    layers.push(vec![start_id]);

    // Interior layers: lateral grid x time grid.
    let lateral_count = (lateral_max / params.dl).floor() as i64;
    for i in 1..n_layers {
        let s = problem.start.s + effective_ds * i as f64;
        let t_min = effective_ds * i as f64 / weights.v_max;
        let t_max = t_min * (1.0 + params.time_window_factor);
        let times = grid_times(t_min, t_max, params.dt);
        let mut layer = Vec::new();
        for k in -lateral_count..=lateral_count {
            let l = k as f64 * params.dl;
            for &t in &times {
                layer.push(push_node(
                    &mut nodes,
                    SltPoint { s, l, t },
                    NodeKind::Layer,
                    i,
                ));
            }
        }
        layers.push(layer);
    }

    // Goal layer: shared coordinates, one node per sampled arrival time.
    let goal_times = grid_times(problem.goal_window.0, problem.goal_window.1, params.dt);
    let mut goal_layer = Vec::new();
    for &t in &goal_times {
        goal_layer.push(push_node(
            &mut nodes,
            SltPoint {
                s: problem.goal.s,
                l: problem.goal.l,
                t,
            },
            NodeKind::Layer,
            n_layers,
        ));
    }
    layers.push(goal_layer.clone());

    // Obstacle tracks in road coordinates for passing-side signatures.
    let t_horizon = problem.goal_window.1 + 1.0;
    let tracks: Vec<FrenetTrack> = problem
        .obstacles
        .iter()
        .map(|o| FrenetTrack::build(o, problem.line, t_horizon, 0.05))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut edges: Vec<Edge> = Vec::new();
    let mut direct_edge_count = 0;
    let mut link_edge_count = 0;
    let mut partials: Vec<BTreeMap<u64, Vec<Partial>>> = vec![BTreeMap::new(); nodes.len()];
    partials[start_id]
        .entry(0)
        .or_default()
        .push(Partial::seed(start_id));
    let mut deepest_layer = 0usize;

    for i in 0..layers.len() - 1 {
        // Link-node candidates between layer i and i + 1, rejection-sampled
        // outside the inflated footprints.
        let s_lo = nodes[layers[i][0]].slt.s;
        let s_hi = nodes[layers[i + 1][0]].slt.s;
        let t_lo = layers[i]
            .iter()
            .map(|&id| nodes[id].slt.t)
            .fold(f64::MAX, f64::min);
        let t_hi = layers[i + 1]
            .iter()
            .map(|&id| nodes[id].slt.t)
            .fold(f64::MIN, f64::max);
        let mut link_ids = Vec::new();
        let mut attempts = 0;
        while link_ids.len() < params.link_samples && attempts < params.link_samples * 10 {
            attempts += 1;
            let slt = SltPoint {
                s: rng.gen_range(s_lo..s_hi),
                l: rng.gen_range(-lateral_max..lateral_max),
                t: rng.gen_range(t_lo..t_hi.max(t_lo + params.dt)),
            };
            if clearance_at(slt, &ctx) > 0.0 {
                link_ids.push(nodes.len());
                push_node(&mut nodes, slt, NodeKind::Link, i);
                partials.push(BTreeMap::new());
            }
        }

        for &p1 in &layers[i] {
            if partials[p1].is_empty() {
                continue;
            }
            let a = nodes[p1].slt;
            for &p2 in &layers[i + 1] {
                let b = nodes[p2].slt;
                if b.t <= a.t {
                    continue;
                }
                let direct_visible =
                    segment_visible(a, b, ctx.line, ctx.obstacles, ctx.inflation, ctx.dt_check);
                let edge = if direct_visible {
                    if is_reachable(a, b, weights.v_max) {
                        direct_edge_count += 1;
                        Some(Edge {
                            from: p1,
                            via: None,
                            to: p2,
                        })
                    } else {
                        None
                    }
                } else {
                    // First feasible link node bridging the blocked pair.
                    link_ids
                        .iter()
                        .copied()
                        .find(|&lid| {
                            let l = nodes[lid].slt;
                            a.t < l.t
                                && l.t < b.t
                                && is_reachable(a, l, weights.v_max)
                                && is_reachable(l, b, weights.v_max)
                                && segment_visible(
                                    a,
                                    l,
                                    ctx.line,
                                    ctx.obstacles,
                                    ctx.inflation,
                                    ctx.dt_check,
                                )
                                && segment_visible(
                                    l,
                                    b,
                                    ctx.line,
                                    ctx.obstacles,
                                    ctx.inflation,
                                    ctx.dt_check,
                                )
                        })
                        .map(|lid| {
                            link_edge_count += 1;
                            Edge {
                                from: p1,
                                via: Some(lid),
                                to: p2,
                            }
                        })
                };
                let Some(edge) = edge else { continue };
                edges.push(edge);
                extend_through_edge(
                    &edge,
                    &nodes,
                    &mut partials,
                    &tracks,
                    weights,
                    &ctx,
                    start_slt,
                    params.k_best,
                );
                deepest_layer = deepest_layer.max(i + 1);
            }
        }
    }

    // Collect full skeletons at the goal nodes and score them exactly.
    let mut skeletons: Vec<Skeleton> = Vec::new();
    for &g in &goal_layer {
        for bucket in partials[g].values() {
            for partial in bucket {
                let points: Vec<SkeletonPoint> = partial
                    .nodes
                    .iter()
                    .map(|&id| SkeletonPoint {
                        slt: nodes[id].slt,
                        x: nodes[id].x,
                        y: nodes[id].y,
                    })
                    .collect();
                if let Ok((cost, terms)) =
                    skeleton_cost(&points, weights, &ctx, params.obstacle_cost_samples)
                {
                    skeletons.push(Skeleton {
                        points,
                        cost,
                        terms,
                        signature: partial.signature,
                    });
                }
            }
        }
    }
    if skeletons.is_empty() {
        return Err(SearchError::NoPathToGoal {
            diagnostic: format!(
                "deepest layer reached {} of {}, {} direct and {} link edges",
                deepest_layer,
                layers.len() - 1,
                direct_edge_count,
                link_edge_count
            ),
        });
    }
    skeletons.sort_by(|x, y| {
        x.cost
            .total_cmp(&y.cost)
            .then(x.arrival_time().total_cmp(&y.arrival_time()))
            .then_with(|| compare_point_lists(&x.points, &y.points))
    });

    let mut incoming = vec![Vec::new(); nodes.len()];
    let mut outgoing = vec![Vec::new(); nodes.len()];
    for (i, edge) in edges.iter().enumerate() {
        outgoing[edge.from].push(i);
        incoming[edge.to].push(i);
        if let Some(via) = edge.via {
            incoming[via].push(i);
            outgoing[via].push(i);
        }
    }

    Ok(SearchGraph {
        nodes,
        edges,
        goal_nodes: goal_layer,
        skeletons,
        effective_ds,
        direct_edge_count,
        link_edge_count,
        incoming,
        outgoing,
    })
}

fn compare_point_lists(a: &[SkeletonPoint], b: &[SkeletonPoint]) -> std::cmp::Ordering {
    for (p, q) in a.iter().zip(b.iter()) {
        let ord = p
            .slt
            .s
            .total_cmp(&q.slt.s)
            .then(p.slt.l.total_cmp(&q.slt.l))
            .then(p.slt.t.total_cmp(&q.slt.t));
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    a.len().cmp(&b.len())
}

/// Arrival times on the global dt grid inside [t_min, t_max]; falls back to
/// the first grid point at or after t_min when the window is narrower than
/// the grid step.
fn grid_times(t_min: f64, t_max: f64, dt: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = ((t_min - 1e-9) / dt).ceil().max(0.0) as i64;
    while k as f64 * dt <= t_max + 1e-9 {
        out.push(k as f64 * dt);
        k += 1;
    }
    if out.is_empty() {
        out.push(((t_min - 1e-9) / dt).ceil().max(0.0) * dt);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn extend_through_edge(
    edge: &Edge,
    nodes: &[GraphNode],
    partials: &mut [BTreeMap<u64, Vec<Partial>>],
    tracks: &[FrenetTrack],
    weights: &CostWeights,
    ctx: &CollisionContext,
    start: SltPoint,
    k_best: usize,
) {
    let mut extended: Vec<Partial> = Vec::new();
    for bucket in partials[edge.from].values() {
        for partial in bucket {
            let mut next = partial.clone();
            if let Some(via) = edge.via {
                append_point(&mut next, nodes, via, tracks, weights, ctx);
            }
            append_point(&mut next, nodes, edge.to, tracks, weights, ctx);
            extended.push(next);
        }
    }
    let here = nodes[edge.to].slt;
    for partial in extended {
        let bucket = partials[edge.to].entry(partial.signature).or_default();
        let cost = partial.ranking_cost(start, here, weights);
        let pos = bucket
            .binary_search_by(|other| {
                other
                    .ranking_cost(start, here, weights)
                    .total_cmp(&cost)
                    .then(other.arrival.total_cmp(&partial.arrival))
                    .then_with(|| other.nodes.cmp(&partial.nodes))
            })
            .unwrap_or_else(|e| e);
        if pos < k_best {
            bucket.insert(pos, partial);
            bucket.truncate(k_best);
        }
    }
}

fn append_point(
    partial: &mut Partial,
    nodes: &[GraphNode],
    id: usize,
    tracks: &[FrenetTrack],
    weights: &CostWeights,
    ctx: &CollisionContext,
) {
    let prev_id = *partial.nodes.last().unwrap();
    let prev = nodes[prev_id].slt;
    let here = nodes[id].slt;
    let seg = slt_distance(prev, here);

    // Bend and acceleration at the now-interior previous node.
    if partial.nodes.len() >= 2 {
        let before = nodes[partial.nodes[partial.nodes.len() - 2]].slt;
        let v1 = Vector2::new(prev.s - before.s, prev.l - before.l);
        let v2 = Vector2::new(here.s - prev.s, here.l - prev.l);
        let n1 = v1.norm();
        let n2 = v2.norm();
        if n1 >= 1e-9 && n2 >= 1e-9 {
            let cos = (v1.dot(&v2) / (n1 * n2)).clamp(-1.0, 1.0);
            partial.bend_sum += cos.acos() / std::f64::consts::PI;
        }
        let dt0 = prev.t - before.t;
        let dt1 = here.t - prev.t;
        if dt0 > 0.0 && dt1 > 0.0 {
            let a = 2.0 * (n2 / dt1 - n1 / dt0) / (dt0 + dt1);
            partial.acc_sum += a;
            partial.acc_sq_sum += a * a;
            partial.acc_count += 1;
        }
    }
    partial.length += seg;
    partial.arrival = here.t;

    // Per-edge obstacle penalty samples (0.5 m spacing).
    let samples = ((seg / 0.5).ceil() as usize).max(1);
    for k in 0..samples {
        let alpha = (k as f64 + 0.5) / samples as f64;
        let sample = SltPoint {
            s: prev.s + (here.s - prev.s) * alpha,
            l: prev.l + (here.l - prev.l) * alpha,
            t: prev.t + (here.t - prev.t) * alpha,
        };
        let clearance = clearance_at(sample, ctx);
        partial.obstacle_penalty +=
            (weights.r_threshold - clearance.min(weights.r_threshold)) / weights.r_threshold;
        partial.obstacle_samples += 1;
    }

    // Passing-side signature update per obstacle.
    for (j, track) in tracks.iter().enumerate() {
        let (s0, _) = track.at(prev.t);
        let (s1, _) = track.at(here.t);
        if s0.is_nan() || s1.is_nan() {
            continue;
        }
        let g0 = prev.s - s0;
        let g1 = here.s - s1;
        if g0 <= 0.0 && g1 > 0.0 {
            let alpha = g0.abs() / (g1 - g0).abs().max(1e-9);
            let t_cross = prev.t + (here.t - prev.t) * alpha;
            let l_ego = prev.l + (here.l - prev.l) * alpha;
            let (_, l_obs) = track.at(t_cross);
            let side: u64 = if l_ego >= l_obs { 1 } else { 2 };
            let base = 3u64.pow(j as u32);
            let current = (partial.signature / base) % 3;
            partial.signature = partial.signature - current * base + side * base;
        }
    }

    partial.nodes.push(id);
}

/// Walks the sorted skeleton list and keeps the cheapest representative of
/// each topology class, up to `n_skeletons`.
///
/// Distinct passing signatures are surfaced first (they are the clean
/// maneuver alternatives: pass left vs right, before vs after); remaining
/// slots are filled from the sorted stream. The visibility-deformation test
/// remains the authoritative pairwise equivalence check throughout.
pub fn extract_distinct_skeletons(
    graph: &SearchGraph,
    ctx: &CollisionContext,
    params: &SearchParams,
) -> Result<Vec<Skeleton>, SearchError> {
    let mut kept: Vec<Skeleton> = Vec::new();
    let mut seen_signatures = std::collections::BTreeSet::new();
    for candidate in &graph.skeletons {
        if kept.len() >= params.n_skeletons {
            break;
        }
        if !seen_signatures.insert(candidate.signature) {
            continue;
        }
        if is_distinct(&kept, candidate, ctx, params.uvd_ds)? {
            kept.push(candidate.clone());
        }
    }
    for candidate in &graph.skeletons {
        if kept.len() >= params.n_skeletons {
            break;
        }
        if is_distinct(&kept, candidate, ctx, params.uvd_ds)? {
            kept.push(candidate.clone());
        }
    }
    kept.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    Ok(kept)
}

fn is_distinct(
    kept: &[Skeleton],
    candidate: &Skeleton,
    ctx: &CollisionContext,
    uvd_ds: f64,
) -> Result<bool, SearchError> {
    for existing in kept {
        if uvd_equivalent(existing, candidate, ctx, uvd_ds)? {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TimedPose;
    use approx::assert_relative_eq;

    fn slt(s: f64, l: f64, t: f64) -> SltPoint {
        SltPoint { s, l, t }
    }

    #[test]
    fn reachability_boundary() {
        let v_max = 15.0;
        assert!(is_reachable(slt(0.0, 0.0, 0.0), slt(15.0, 0.0, 1.0), v_max));
        assert!(is_reachable(slt(0.0, 0.0, 0.0), slt(0.0, 0.0, 0.5), v_max));
        assert!(!is_reachable(
            slt(0.0, 0.0, 0.0),
            slt(16.0, 0.0, 1.0),
            v_max
        ));
    }

    fn empty_ctx(line: &Centerline) -> CollisionContext<'_> {
        CollisionContext {
            line,
            obstacles: &[],
            inflation: 0.0,
            dt_check: 0.05,
        }
    }

    fn points_from(slts: &[SltPoint], line: &Centerline) -> Vec<SkeletonPoint> {
        slts.iter()
            .map(|&p| {
                let c = line
                    .frenet_to_cartesian(FrenetPose { s: p.s, l: p.l })
                    .unwrap();
                SkeletonPoint {
                    slt: p,
                    x: c.x,
                    y: c.y,
                }
            })
            .collect()
    }

    #[test]
    fn straight_uniform_skeleton_cost_terms() {
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let ctx = empty_ctx(&line);
        let weights = CostWeights::default();
        let slts: Vec<SltPoint> = (0..=5)
            .map(|k| slt(10.0 * k as f64, 0.0, k as f64))
            .collect();
        let points = points_from(&slts, &line);
        let (_, terms) = skeleton_cost(&points, &weights, &ctx, 10).unwrap();
        assert_relative_eq!(terms.bend, 0.0, epsilon = 1e-12);
        assert_relative_eq!(terms.accel, 0.0, epsilon = 1e-12);
        assert_relative_eq!(terms.obstacle, 0.0, epsilon = 1e-12);
        assert_relative_eq!(terms.length, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn right_angle_bend_costs_half() {
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let ctx = empty_ctx(&line);
        let weights = CostWeights::default();
        let slts = [slt(0.0, 0.0, 0.0), slt(5.0, 0.0, 1.0), slt(5.0, 5.0, 2.0)];
        let points = points_from(&slts, &line);
        let (_, terms) = skeleton_cost(&points, &weights, &ctx, 0).unwrap();
        assert_relative_eq!(terms.bend, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn obstacle_penalty_single_sample() {
        // One of ten uniform samples sits at half the threshold clearance.
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let obstacle = ObstacleTrajectory::new(
            vec![TimedPose {
                t: 0.0,
                x: 5.5,
                y: 0.1,
                heading: 0.0,
            }],
            0.1,
            0.1,
        )
        .unwrap();
        let obstacles = [obstacle];
        let ctx = CollisionContext {
            line: &line,
            obstacles: &obstacles,
            inflation: 0.0,
            dt_check: 0.05,
        };
        let weights = CostWeights::default();
        let slts = [slt(0.0, 0.0, 0.0), slt(10.0, 0.0, 1.0)];
        let points = points_from(&slts, &line);
        let (_, terms) = skeleton_cost(&points, &weights, &ctx, 10).unwrap();
        // Sample at s = 5.5: distance to the box edge = 0.1 - 0.05 = r_th / 2.
        assert_relative_eq!(terms.obstacle, 0.05, epsilon = 1e-9);
    }

    fn test_problem<'a>(
        line: &'a Centerline,
        bounds: &'a RoadBounds,
        obstacles: &'a [ObstacleTrajectory],
    ) -> SearchProblem<'a> {
        SearchProblem {
            line,
            bounds,
            obstacles,
            start: FrenetPose { s: 0.0, l: 0.0 },
            goal: FrenetPose { s: 40.0, l: 0.0 },
            goal_window: (3.2, 4.4),
            ego_half_width: 0.95,
            inflation: 0.2 + 2.35,
        }
    }

    #[test]
    fn obstacle_free_graph_has_no_link_edges() {
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let bounds = RoadBounds {
            half_width: 5.0,
            s_min: 0.0,
            s_max: 100.0,
        };
        let problem = test_problem(&line, &bounds, &[]);
        let params = SearchParams {
            seed: 3,
            ..SearchParams::default()
        };
        let weights = CostWeights::default();
        let graph = build_graph(&problem, &params, &weights).unwrap();
        assert_eq!(graph.link_edge_count, 0);
        assert!(graph.direct_edge_count > 0);
        // Goal nodes: one per sampled arrival time on the 0.4 s grid.
        assert_eq!(graph.goal_nodes.len(), 4); // 3.2, 3.6, 4.0, 4.4
        let ctx = CollisionContext {
            line: &line,
            obstacles: &[],
            inflation: problem.inflation,
            dt_check: params.dt_check,
        };
        let distinct = extract_distinct_skeletons(&graph, &ctx, &params).unwrap();
        assert_eq!(
            distinct.len(),
            1,
            "all obstacle-free skeletons share one class"
        );
    }

    #[test]
    fn blocked_center_uses_link_edges_and_two_classes() {
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let bounds = RoadBounds {
            half_width: 7.0,
            s_min: 0.0,
            s_max: 100.0,
        };
        // Parked vehicle on the lane center ahead.
        let parked = ObstacleTrajectory::new(
            vec![TimedPose {
                t: 0.0,
                x: 20.0,
                y: 0.0,
                heading: 0.0,
            }],
            4.3,
            1.9,
        )
        .unwrap();
        let obstacles = [parked];
        let problem = SearchProblem {
            goal_window: (3.2, 4.8),
            ..test_problem(&line, &bounds, &obstacles)
        };
        let params = SearchParams {
            dl: 1.2,
            link_samples: 40,
            seed: 11,
            ..SearchParams::default()
        };
        let weights = CostWeights::default();
        let graph = build_graph(&problem, &params, &weights).unwrap();
        assert!(
            graph.link_edge_count > 0,
            "blocked direct connections should be bridged by link nodes"
        );
        let ctx = CollisionContext {
            line: &line,
            obstacles: &obstacles,
            inflation: problem.inflation,
            dt_check: params.dt_check,
        };
        let distinct = extract_distinct_skeletons(&graph, &ctx, &params).unwrap();
        assert_eq!(
            distinct.len(),
            2,
            "left and right passes are distinct classes"
        );
        // Every returned skeleton is collision-free and speed-feasible.
        for skeleton in &distinct {
            for w in skeleton.points.windows(2) {
                assert!(is_reachable(w[0].slt, w[1].slt, weights.v_max));
                assert!(segment_visible(
                    w[0].slt,
                    w[1].slt,
                    &line,
                    &obstacles,
                    problem.inflation,
                    params.dt_check
                ));
            }
        }
        // Stored cost equals a from-scratch recomputation.
        for skeleton in &distinct {
            let (cost, _) = skeleton_cost(
                &skeleton.points,
                &weights,
                &ctx,
                params.obstacle_cost_samples,
            )
            .unwrap();
            assert_relative_eq!(cost, skeleton.cost, epsilon = 1e-9);
        }
    }

    #[test]
    fn uvd_reflexive_and_side_sensitive() {
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let parked = ObstacleTrajectory::new(
            vec![TimedPose {
                t: 0.0,
                x: 20.0,
                y: 0.0,
                heading: 0.0,
            }],
            4.3,
            1.9,
        )
        .unwrap();
        let obstacles = [parked];
        let ctx = CollisionContext {
            line: &line,
            obstacles: &obstacles,
            inflation: 1.0,
            dt_check: 0.05,
        };
        let make = |l_mid: f64, t_mid: f64| -> Skeleton {
            let slts = [
                slt(0.0, 0.0, 0.0),
                slt(20.0, l_mid, t_mid),
                slt(40.0, 0.0, 4.0),
            ];
            Skeleton {
                points: slts
                    .iter()
                    .map(|&p| {
                        let c = line
                            .frenet_to_cartesian(FrenetPose { s: p.s, l: p.l })
                            .unwrap();
                        SkeletonPoint {
                            slt: p,
                            x: c.x,
                            y: c.y,
                        }
                    })
                    .collect(),
                cost: 0.0,
                terms: CostTerms::default(),
                signature: 0,
            }
        };
        let left_a = make(3.5, 2.0);
        let left_b = make(4.5, 2.2);
        let right = make(-3.5, 2.0);
        assert!(uvd_equivalent(&left_a, &left_a, &ctx, 0.5).unwrap());
        assert!(uvd_equivalent(&left_a, &left_b, &ctx, 0.5).unwrap());
        assert!(!uvd_equivalent(&left_a, &right, &ctx, 0.5).unwrap());
        // Symmetry.
        assert!(uvd_equivalent(&left_b, &left_a, &ctx, 0.5).unwrap());
        assert!(!uvd_equivalent(&right, &left_a, &ctx, 0.5).unwrap());
    }

    #[test]
    fn mismatched_endpoints_error() {
        let line = Centerline::straight(100.0, 0.5).unwrap();
        let ctx = empty_ctx(&line);
        let make = |s_end: f64| -> Skeleton {
            let slts = [slt(0.0, 0.0, 0.0), slt(s_end, 0.0, 4.0)];
            Skeleton {
                points: slts
                    .iter()
                    .map(|&p| SkeletonPoint {
                        slt: p,
                        x: p.s,
                        y: p.l,
                    })
                    .collect(),
                cost: 0.0,
                terms: CostTerms::default(),
                signature: 0,
            }
        };
        assert!(matches!(
            uvd_equivalent(&make(40.0), &make(45.0), &ctx, 0.5),
            Err(SearchError::MismatchedEndpoints)
        ));
    }

    #[test]
    fn grid_times_cover_window() {
        let times = grid_times(3.2, 4.4, 0.4);
        assert_eq!(times.len(), 4);
        assert_relative_eq!(times[0], 3.2, epsilon = 1e-9);
        assert_relative_eq!(times[3], 4.4, epsilon = 1e-9);
        assert_eq!(grid_times(0.5, 0.7, 0.4).len(), 1);
    }
}
