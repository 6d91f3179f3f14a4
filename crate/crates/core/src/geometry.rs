//! Road geometry: centerline with Frenet transforms, moving rectangular
//! obstacles, and the visibility / clearance queries used by both planner
//! layers.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// A sample of the road centerline.
#[derive(Debug, Clone, Copy)]
pub struct CenterlineSample {
    pub position: Vector2<f64>,
    pub s: f64,
    pub heading: f64,
}

/// Piecewise-linear road centerline with arc-length parameterization.
///
/// Samples are dense enough (gap <= max spacing) that treating the segments
/// as straight keeps transform errors far below the planner tolerances.
#[derive(Debug, Clone)]
pub struct Centerline {
    samples: Vec<CenterlineSample>,
    total_length: f64,
}

/// Longitudinal / lateral road coordinates (lateral positive to the left).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetPose {
    pub s: f64,
    pub l: f64,
}

/// Lateral road extent and the covered arc-length range.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RoadBounds {
    pub half_width: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Centerline {
    pub const DEFAULT_MAX_SPACING: f64 = 0.5;

    /// Builds a centerline through the given waypoints, resampled so no gap
    /// exceeds `max_spacing`.
    pub fn from_waypoints(
        points: &[Vector2<f64>],
        max_spacing: f64,
    ) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::DegenerateCenterline);
        }
        let mut dense: Vec<Vector2<f64>> = vec![points[0]];
        for w in points.windows(2) {
            let gap = (w[1] - w[0]).norm();
            let subdivisions = (gap / max_spacing).ceil().max(1.0) as usize;
            for k in 1..=subdivisions {
                dense.push(w[0] + (w[1] - w[0]) * (k as f64 / subdivisions as f64));
            }
        }
        let mut samples = Vec::with_capacity(dense.len());
        let mut s = 0.0;
        for (i, &position) in dense.iter().enumerate() {
            if i > 0 {
                s += (position - dense[i - 1]).norm();
            }
            let direction = if i + 1 < dense.len() {
                dense[i + 1] - position
            } else {
                position - dense[i - 1]
            };
            samples.push(CenterlineSample {
                position,
                s,
                heading: direction.y.atan2(direction.x),
            });
        }
        let line = Centerline {
            total_length: s,
            samples,
        };
        line.check_spacing(max_spacing)?;
        Ok(line)
    }

    /// Straight centerline along +x from the origin.
    pub fn straight(length: f64, max_spacing: f64) -> Result<Self, GeometryError> {
        Self::from_waypoints(&[Vector2::zeros(), Vector2::new(length, 0.0)], max_spacing)
    }

    /// Circular arc of the given radius and swept angle, starting at the
    /// origin heading +x and curving left for positive angles.
    pub fn arc(radius: f64, angle: f64, max_spacing: f64) -> Result<Self, GeometryError> {
        let arc_len = radius * angle.abs();
        let n = (arc_len / (max_spacing * 0.5)).ceil().max(4.0) as usize;
        let sign = angle.signum();
        let points: Vec<Vector2<f64>> = (0..=n)
            .map(|k| {
                let phi = angle.abs() * k as f64 / n as f64;
                Vector2::new(radius * phi.sin(), sign * radius * (1.0 - phi.cos()))
            })
            .collect();
        Self::from_waypoints(&points, max_spacing)
    }

    fn check_spacing(&self, max_spacing: f64) -> Result<(), GeometryError> {
        for (i, w) in self.samples.windows(2).enumerate() {
            let gap = (w[1].position - w[0].position).norm();
            if gap > max_spacing + 1e-9 {
                return Err(GeometryError::SpacingExceeded {
                    gap,
                    max: max_spacing,
                    index: i + 1,
                });
            }
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn samples(&self) -> &[CenterlineSample] {
        &self.samples
    }

    fn segment_index(&self, s: f64) -> usize {
        match self
            .samples
            .binary_search_by(|sample| sample.s.partial_cmp(&s).unwrap())
        {
            Ok(i) => i.min(self.samples.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.samples.len() - 2),
        }
    }

    /// Centerline point and segment heading at arc length `s`. A small grace
    /// band past the ends absorbs arc-length rounding from resampling.
    pub fn point_at(&self, s: f64) -> Result<(Vector2<f64>, f64), GeometryError> {
        if !(-1e-5..=self.total_length + 1e-5).contains(&s) {
            return Err(GeometryError::ArcLengthOutOfRange {
                s,
                max: self.total_length,
            });
        }
        let s = s.clamp(0.0, self.total_length);
        let i = self.segment_index(s);
        let a = &self.samples[i];
        let b = &self.samples[i + 1];
        let span = b.s - a.s;
        let alpha = if span > 0.0 { (s - a.s) / span } else { 0.0 };
        Ok((a.position + (b.position - a.position) * alpha, a.heading))
    }

    /// Maps a Frenet pose to Cartesian coordinates.
    pub fn frenet_to_cartesian(&self, pose: FrenetPose) -> Result<Vector2<f64>, GeometryError> {
        let (base, heading) = self.point_at(pose.s)?;
        let normal = Vector2::new(-heading.sin(), heading.cos());
        Ok(base + normal * pose.l)
    }

    /// Projects a Cartesian point onto the centerline. Ambiguous projections
    /// (equidistant segments) resolve to the smaller arc length.
    pub fn cartesian_to_frenet(
        &self,
        point: Vector2<f64>,
        tolerance: f64,
    ) -> Result<FrenetPose, GeometryError> {
        let mut best: Option<(f64, f64, f64)> = None; // (dist2, s, l)
        for w in self.samples.windows(2) {
            let a = &w[0];
            let b = &w[1];
            let d = b.position - a.position;
            let len2 = d.norm_squared();
            if len2 == 0.0 {
                continue;
            }
            let alpha = ((point - a.position).dot(&d) / len2).clamp(0.0, 1.0);
            let proj = a.position + d * alpha;
            let offset = point - proj;
            let dist2 = offset.norm_squared();
            let s = a.s + alpha * (b.s - a.s);
            let l = (d.x * offset.y - d.y * offset.x) / len2.sqrt();
            let better = match best {
                None => true,
                Some((bd, _, _)) => dist2 < bd - 1e-12,
            };
            if better {
                best = Some((dist2, s, l));
            }
        }
        let (dist2, s, l) = best.ok_or(GeometryError::DegenerateCenterline)?;
        if dist2.sqrt() > tolerance {
            return Err(GeometryError::ProjectionOutOfRange {
                x: point.x,
                y: point.y,
                dist: dist2.sqrt(),
                tol: tolerance,
            });
        }
        Ok(FrenetPose { s, l })
    }
}

/// Timestamped obstacle pose.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimedPose {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

/// A moving vehicle treated as an obstacle: waypoint trajectory plus a
/// rectangular footprint.
#[derive(Debug, Clone)]
pub struct ObstacleTrajectory {
    pub states: Vec<TimedPose>,
    pub footprint_length: f64,
    pub footprint_width: f64,
}

impl ObstacleTrajectory {
    pub fn new(
        states: Vec<TimedPose>,
        footprint_length: f64,
        footprint_width: f64,
    ) -> Result<Self, GeometryError> {
        if states.is_empty() {
            return Err(GeometryError::EmptyObstacleTrajectory);
        }
        assert!(footprint_length > 0.0 && footprint_width > 0.0);
        Ok(ObstacleTrajectory {
            states,
            footprint_length,
            footprint_width,
        })
    }

    /// Pose at time `t`: linear position interpolation, shortest-arc heading
    /// interpolation. Outside the stamped horizon the obstacle is assumed
    /// stopped at the nearest endpoint; the flag reports the clamping.
    pub fn pose_at(&self, t: f64) -> (TimedPose, bool) {
        let first = self.states.first().unwrap();
        let last = self.states.last().unwrap();
        if t <= first.t {
            return (TimedPose { t, ..*first }, t < first.t);
        }
        if t >= last.t {
            return (TimedPose { t, ..*last }, t > last.t);
        }
        let idx = self.states.partition_point(|s| s.t <= t);
        let a = &self.states[idx - 1];
        let b = &self.states[idx];
        let alpha = (t - a.t) / (b.t - a.t);
        let heading = a.heading + wrap_angle(b.heading - a.heading) * alpha;
        (
            TimedPose {
                t,
                x: a.x + (b.x - a.x) * alpha,
                y: a.y + (b.y - a.y) * alpha,
                heading: wrap_angle(heading),
            },
            false,
        )
    }

    /// Footprint rectangle at time `t`.
    pub fn footprint_at(&self, t: f64) -> OrientedRect {
        let (pose, _) = self.pose_at(t);
        OrientedRect {
            center: Vector2::new(pose.x, pose.y),
            heading: pose.heading,
            half_length: 0.5 * self.footprint_length,
            half_width: 0.5 * self.footprint_width,
        }
    }
}

/// Oriented rectangle in the plane.
#[derive(Debug, Clone, Copy)]
pub struct OrientedRect {
    pub center: Vector2<f64>,
    pub heading: f64,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedRect {
    fn to_local(self, p: Vector2<f64>) -> Vector2<f64> {
        let d = p - self.center;
        let (sin, cos) = self.heading.sin_cos();
        Vector2::new(cos * d.x + sin * d.y, -sin * d.x + cos * d.y)
    }

    /// Whether `p` lies inside the rectangle inflated by `inflation` on all
    /// sides.
    pub fn contains_point(&self, p: Vector2<f64>, inflation: f64) -> bool {
        let local = self.to_local(p);
        local.x.abs() <= self.half_length + inflation
            && local.y.abs() <= self.half_width + inflation
    }

    /// Euclidean distance from `p` to the rectangle (zero inside).
    pub fn distance_to_point(&self, p: Vector2<f64>) -> f64 {
        let local = self.to_local(p);
        let dx = (local.x.abs() - self.half_length).max(0.0);
        let dy = (local.y.abs() - self.half_width).max(0.0);
        (dx * dx + dy * dy).sqrt()
    }

    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let (sin, cos) = self.heading.sin_cos();
        let axis_l = Vector2::new(cos, sin) * self.half_length;
        let axis_w = Vector2::new(-sin, cos) * self.half_width;
        [
            self.center + axis_l + axis_w,
            self.center + axis_l - axis_w,
            self.center - axis_l - axis_w,
            self.center - axis_l + axis_w,
        ]
    }

    fn overlaps(&self, other: &OrientedRect) -> bool {
        // Separating-axis test over both rectangles' axes.
        let axes = |r: &OrientedRect| {
            let (sin, cos) = r.heading.sin_cos();
            [Vector2::new(cos, sin), Vector2::new(-sin, cos)]
        };
        let corners_a = self.corners();
        let corners_b = other.corners();
        for axis in axes(self).into_iter().chain(axes(other)) {
            let project = |cs: &[Vector2<f64>; 4]| {
                let mut lo = f64::MAX;
                let mut hi = f64::MIN;
                for c in cs {
                    let v = c.dot(&axis);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            };
            let (alo, ahi) = project(&corners_a);
            let (blo, bhi) = project(&corners_b);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
        true
    }

    /// Separation distance between two rectangles (zero when overlapping),
    /// via vertex-to-edge projections in both directions.
    pub fn distance_to_rect(&self, other: &OrientedRect) -> f64 {
        if self.overlaps(other) {
            return 0.0;
        }
        let mut best = f64::MAX;
        let corners_a = self.corners();
        let corners_b = other.corners();
        for (rect, corners) in [(other, &corners_a), (self, &corners_b)] {
            let edge_pts = rect.corners();
            for &p in corners.iter() {
                for e in 0..4 {
                    let a = edge_pts[e];
                    let b = edge_pts[(e + 1) % 4];
                    best = best.min(point_segment_distance(p, a, b));
                }
            }
        }
        best
    }
}

fn point_segment_distance(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let alpha = ((p - a).dot(&d) / len2).clamp(0.0, 1.0);
    (p - (a + d * alpha)).norm()
}

/// A node of the space-time search volume: arc length, lateral offset, time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SltPoint {
    pub s: f64,
    pub l: f64,
    pub t: f64,
}

/// Sampling step along visibility segments.
pub const DEFAULT_DT_CHECK: f64 = 0.05;

/// Whether the straight segment between two space-time nodes stays clear of
/// every obstacle footprint inflated by `inflation`.
///
/// The segment is sampled at `dt_check`; each sample is mapped to Cartesian
/// coordinates and tested against the footprint at the sample time.
pub fn segment_visible(
    a: SltPoint,
    b: SltPoint,
    line: &Centerline,
    obstacles: &[ObstacleTrajectory],
    inflation: f64,
    dt_check: f64,
) -> bool {
    let span = b.t - a.t;
    let n = ((span / dt_check).ceil() as usize).max(1);
    for k in 0..=n {
        let alpha = k as f64 / n as f64;
        let s = a.s + (b.s - a.s) * alpha;
        let l = a.l + (b.l - a.l) * alpha;
        let t = a.t + span * alpha;
        let Ok(point) = line.frenet_to_cartesian(FrenetPose { s, l }) else {
            return false;
        };
        for obstacle in obstacles {
            if obstacle.footprint_at(t).contains_point(point, inflation) {
                return false;
            }
        }
    }
    true
}

/// Clearance summary of an ego footprint sweep against the obstacle set.
#[derive(Debug, Clone, Copy)]
pub struct ObstacleClearance {
    /// Minimum footprint-to-footprint distance (infinite without obstacles).
    pub min_distance: f64,
    /// Fraction of the swept arc length with distance below the threshold.
    pub below_threshold_fraction: f64,
}

/// Minimum obstacle clearance along a sampled ego motion. Samples are
/// (t, x, y, heading) tuples; arc length between consecutive samples weights
/// the below-threshold fraction.
pub fn min_obstacle_distance(
    ego_samples: &[(f64, f64, f64, f64)],
    ego_length: f64,
    ego_width: f64,
    obstacles: &[ObstacleTrajectory],
    r_threshold: f64,
) -> ObstacleClearance {
    if obstacles.is_empty() || ego_samples.is_empty() {
        return ObstacleClearance {
            min_distance: f64::INFINITY,
            below_threshold_fraction: 0.0,
        };
    }
    let mut min_distance = f64::INFINITY;
    let mut below = 0.0;
    let mut total = 0.0;
    let seg_len = |i: usize, j: usize| -> f64 {
        let (_, xi, yi, _) = ego_samples[i];
        let (_, xj, yj, _) = ego_samples[j];
        ((xj - xi).powi(2) + (yj - yi).powi(2)).sqrt()
    };
    for (i, &(t, x, y, heading)) in ego_samples.iter().enumerate() {
        let ego = OrientedRect {
            center: Vector2::new(x, y),
            heading,
            half_length: 0.5 * ego_length,
            half_width: 0.5 * ego_width,
        };
        let mut d = f64::MAX;
        for obstacle in obstacles {
            d = d.min(obstacle.footprint_at(t).distance_to_rect(&ego));
        }
        min_distance = min_distance.min(d);
        let mut weight = 0.0;
        if i > 0 {
            weight += 0.5 * seg_len(i - 1, i);
        }
        if i + 1 < ego_samples.len() {
            weight += 0.5 * seg_len(i, i + 1);
        }
        total += weight;
        if d < r_threshold {
            below += weight;
        }
    }
    ObstacleClearance {
        min_distance,
        below_threshold_fraction: if total > 0.0 { below / total } else { 0.0 },
    }
}
