//! Lower-layer candidate generation: fits a time-stamped polyline with a
//! smooth piecewise-quintic trajectory.
//!
//! One quintic segment spans each polyline edge, with knots at the node
//! times. Free variables are the position/velocity/acceleration triples at
//! interior knots (Hermite parameterization), which makes the curve C^2 by
//! construction and keeps the problem an unconstrained positive-definite
//! quadratic once the boundary triples are pinned. The objective trades the
//! integrated squared deviation from the linearly interpolated polyline
//! against the integrated squared jerk.

use nalgebra::{DMatrix, DVector, Matrix6, Vector2, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::FitError;

/// Objective weights: `fidelity` scales the deviation term, `jerk` the
/// smoothness term. The sweep parameter is the ratio jerk / fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitWeights {
    pub fidelity: f64,
    pub jerk: f64,
}

impl FitWeights {
    /// Weights with fidelity fixed at 1 and the given jerk/fidelity ratio.
    pub fn from_ratio(r_alpha: f64) -> Self {
        FitWeights {
            fidelity: 1.0,
            jerk: r_alpha,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.jerk / self.fidelity
    }
}

/// Position/velocity/acceleration triple at a knot, per axis.
pub type KnotState = (Vector2<f64>, Vector2<f64>, Vector2<f64>);

/// Boundary triples (position, velocity, acceleration) at both trajectory ends.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryConditions {
    pub start: KnotState,
    pub end: KnotState,
}

impl BoundaryConditions {
    /// Boundary triples estimated from a timed polyline with one-sided
    /// finite differences (second order where three nodes are available).
    pub fn from_polyline(points: &[(f64, Vector2<f64>)]) -> Self {
        let m = points.len() - 1;
        let vel = |a: usize, b: usize| (points[b].1 - points[a].1) / (points[b].0 - points[a].0);
        let start_vel = vel(0, 1);
        let end_vel = vel(m - 1, m);
        let acc_at = |i: usize| -> Vector2<f64> {
            // Second difference over nodes i-1, i, i+1 with nonuniform spacing.
            let dt0 = points[i].0 - points[i - 1].0;
            let dt1 = points[i + 1].0 - points[i].0;
            let v0 = (points[i].1 - points[i - 1].1) / dt0;
            let v1 = (points[i + 1].1 - points[i].1) / dt1;
            (v1 - v0) * 2.0 / (dt0 + dt1)
        };
        let (start_acc, end_acc) = if m >= 2 {
            (acc_at(1), acc_at(m - 1))
        } else {
            (Vector2::zeros(), Vector2::zeros())
        };
        BoundaryConditions {
            start: (points[0].1, start_vel, start_acc),
            end: (points[m].1, end_vel, end_acc),
        }
    }
}

/// One quintic segment in local time tau in [0, T]; monomial coefficients
/// per axis, lowest order first.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuinticSegment {
    pub coeffs: [[f64; 6]; 2],
}

impl QuinticSegment {
    fn eval(&self, axis: usize, tau: f64, derivative: usize) -> f64 {
        let c = &self.coeffs[axis];
        let mut acc = 0.0;
        for j in (derivative..6).rev() {
            let mut factor = 1.0;
            for k in 0..derivative {
                factor *= (j - k) as f64;
            }
            acc = acc * tau + factor * c[j];
        }
        acc
    }
}

/// Piecewise-quintic 2D trajectory parameterized by time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolynomialTrajectory {
    knot_times: Vec<f64>,
    segments: Vec<QuinticSegment>,
}

impl PolynomialTrajectory {
    /// Builds the trajectory from per-knot Hermite data (position, velocity,
    /// acceleration per axis). The result passes through the given triples
    /// exactly and is C^2 at every interior knot.
    #[allow(clippy::needless_range_loop)]
    pub fn from_hermite_data(knot_times: &[f64], states: &[KnotState]) -> Result<Self, FitError> {
        if knot_times.len() < 2 || states.len() != knot_times.len() {
            return Err(FitError::TooFewNodes);
        }
        for (i, w) in knot_times.windows(2).enumerate() {
            if w[1] - w[0] <= 1e-9 {
                return Err(FitError::NonIncreasingKnots { index: i + 1 });
            }
        }
        let basis = hermite_basis_inverse();
        let mut segments = Vec::with_capacity(knot_times.len() - 1);
        for i in 0..knot_times.len() - 1 {
            let duration = knot_times[i + 1] - knot_times[i];
            let mut coeffs = [[0.0; 6]; 2];
            for axis in 0..2 {
                let h = Vector6::new(
                    states[i].0[axis],
                    states[i].1[axis] * duration,
                    states[i].2[axis] * duration * duration,
                    states[i + 1].0[axis],
                    states[i + 1].1[axis] * duration,
                    states[i + 1].2[axis] * duration * duration,
                );
                let normalized = basis * h;
                for j in 0..6 {
                    coeffs[axis][j] = normalized[j] / duration.powi(j as i32);
                }
            }
            segments.push(QuinticSegment { coeffs });
        }
        Ok(PolynomialTrajectory {
            knot_times: knot_times.to_vec(),
            segments,
        })
    }

    pub fn duration(&self) -> f64 {
        *self.knot_times.last().unwrap() - self.knot_times[0]
    }

    pub fn start_time(&self) -> f64 {
        self.knot_times[0]
    }

    pub fn knot_times(&self) -> &[f64] {
        &self.knot_times
    }

    pub fn segments(&self) -> &[QuinticSegment] {
        &self.segments
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let t = t.clamp(self.knot_times[0], *self.knot_times.last().unwrap());
        // Last segment owns its right endpoint.
        let idx = match self
            .knot_times
            .binary_search_by(|k| k.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(self.segments.len() - 1),
            Err(i) => i - 1,
        };
        let idx = idx.min(self.segments.len() - 1);
        (idx, t - self.knot_times[idx])
    }

    fn eval(&self, t: f64, derivative: usize) -> Vector2<f64> {
        let (idx, tau) = self.locate(t);
        Vector2::new(
            self.segments[idx].eval(0, tau, derivative),
            self.segments[idx].eval(1, tau, derivative),
        )
    }

    pub fn position(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 1)
    }

    pub fn acceleration(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 2)
    }

    pub fn jerk(&self, t: f64) -> Vector2<f64> {
        self.eval(t, 3)
    }

    /// Integrated squared jerk over the whole trajectory, closed form.
    pub fn jerk_energy(&self) -> f64 {
        let mut total = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let duration = self.knot_times[i + 1] - self.knot_times[i];
            for axis in 0..2 {
                // Jerk is quadratic: d_j = c_{j+3} (j+3)(j+2)(j+1).
                let c = &seg.coeffs[axis];
                let d = [6.0 * c[3], 24.0 * c[4], 60.0 * c[5]];
                for (j, dj) in d.iter().enumerate() {
                    for (k, dk) in d.iter().enumerate() {
                        let p = (j + k + 1) as f64;
                        total += dj * dk * duration.powf(p) / p;
                    }
                }
            }
        }
        total
    }

    /// Arc length via composite Simpson quadrature of the speed.
    pub fn arc_length(&self) -> f64 {
        let mut total = 0.0;
        let steps_per_segment = 64;
        for i in 0..self.segments.len() {
            let t0 = self.knot_times[i];
            let t1 = self.knot_times[i + 1];
            let h = (t1 - t0) / steps_per_segment as f64;
            let mut acc = self.velocity(t0).norm() + self.velocity(t1).norm();
            for k in 1..steps_per_segment {
                let w = if k % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * self.velocity(t0 + k as f64 * h).norm();
            }
            total += acc * h / 3.0;
        }
        total
    }
}

/// Fits a timed polyline, estimating boundary derivatives from the polyline
/// itself.
pub fn fit_polyline(
    points: &[(f64, Vector2<f64>)],
    weights: &FitWeights,
) -> Result<PolynomialTrajectory, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewNodes);
    }
    let boundary = BoundaryConditions::from_polyline(points);
    fit_polyline_with_boundary(points, weights, &boundary)
}

/// Fits a timed polyline with explicit boundary triples.
pub fn fit_polyline_with_boundary(
    points: &[(f64, Vector2<f64>)],
    weights: &FitWeights,
    boundary: &BoundaryConditions,
) -> Result<PolynomialTrajectory, FitError> {
    let knots: Vec<f64> = points.iter().map(|p| p.0).collect();
    let target = |t: f64| -> Vector2<f64> {
        // Linear interpolation of the polyline at time t.
        let idx = knots.partition_point(|&k| k <= t).clamp(1, knots.len() - 1);
        let (t0, p0) = points[idx - 1];
        let (t1, p1) = points[idx];
        p0 + (p1 - p0) * ((t - t0) / (t1 - t0))
    };
    fit_to_curve(&knots, target, weights, boundary)
}

/// Fits a piecewise quintic with the given knots to an arbitrary target
/// curve, minimizing fidelity + jerk subject to the boundary triples.
#[allow(clippy::needless_range_loop)]
pub fn fit_to_curve(
    knot_times: &[f64],
    target: impl Fn(f64) -> Vector2<f64>,
    weights: &FitWeights,
    boundary: &BoundaryConditions,
) -> Result<PolynomialTrajectory, FitError> {
    assert!(weights.fidelity > 0.0, "fidelity weight must be positive");
    assert!(weights.jerk >= 0.0, "jerk weight must be nonnegative");
    if knot_times.len() < 2 {
        return Err(FitError::TooFewNodes);
    }
    for (i, w) in knot_times.windows(2).enumerate() {
        if w[1] - w[0] <= 1e-9 {
            return Err(FitError::NonIncreasingKnots { index: i + 1 });
        }
    }
    let m = knot_times.len() - 1;
    let basis = hermite_basis_inverse();
    let fid_gram = monomial_gram();
    let jerk_gram = jerk_gram();

    // Free variables per axis: (p, v, a) at interior knots 1..m-1.
    let n_free = 3 * (m - 1);
    let mut states: Vec<KnotState> =
        vec![(Vector2::zeros(), Vector2::zeros(), Vector2::zeros()); m + 1];
    states[0] = boundary.start;
    states[m] = boundary.end;

    if n_free == 0 {
        return PolynomialTrajectory::from_hermite_data(knot_times, &states);
    }

    for axis in 0..2 {
        let mut a_mat = DMatrix::<f64>::zeros(n_free, n_free);
        let mut b_vec = DVector::<f64>::zeros(n_free);
        for i in 0..m {
            let duration = knot_times[i + 1] - knot_times[i];
            let scale = Vector6::new(
                1.0,
                duration,
                duration * duration,
                1.0,
                duration,
                duration * duration,
            );
            // Quadratic form on the scaled Hermite values of this segment.
            let w_mat = fid_gram * (weights.fidelity * duration)
                + jerk_gram * (weights.jerk / duration.powi(5));
            let mut k_local = basis.transpose() * w_mat * basis;
            for r in 0..6 {
                for c in 0..6 {
                    k_local[(r, c)] *= scale[r] * scale[c];
                }
            }
            // Linear term from the fidelity target, Gauss-Legendre exact for
            // polynomial targets up to degree 10.
            let mut r_hat = Vector6::zeros();
            for (node, weight) in GL8 {
                let t = knot_times[i] + node * duration;
                let val = target(t)[axis];
                let mut mono = 1.0;
                for a in 0..6 {
                    r_hat[a] += weight * val * mono;
                    mono *= node;
                }
            }
            let mut l_local = basis.transpose() * r_hat * (weights.fidelity * duration);
            for r in 0..6 {
                l_local[r] *= scale[r];
            }

            // Scatter into the global system, eliminating fixed boundary values.
            let global: Vec<Option<usize>> = (0..6)
                .map(|li| {
                    let (knot, comp) = if li < 3 { (i, li) } else { (i + 1, li - 3) };
                    if knot == 0 || knot == m {
                        None
                    } else {
                        Some(3 * (knot - 1) + comp)
                    }
                })
                .collect();
            let fixed_value = |li: usize| -> f64 {
                let (knot, comp) = if li < 3 { (i, li) } else { (i + 1, li - 3) };
                let s = &states[knot];
                match comp {
                    0 => s.0[axis],
                    1 => s.1[axis],
                    _ => s.2[axis],
                }
            };
            for r in 0..6 {
                let Some(gr) = global[r] else { continue };
                b_vec[gr] += l_local[r];
                for c in 0..6 {
                    match global[c] {
                        Some(gc) => a_mat[(gr, gc)] += k_local[(r, c)],
                        None => b_vec[gr] -= k_local[(r, c)] * fixed_value(c),
                    }
                }
            }
        }

        let chol = nalgebra::linalg::Cholesky::new(a_mat.clone()).ok_or_else(|| {
            let eig = a_mat.symmetric_eigenvalues();
            let max = eig.iter().cloned().fold(f64::MIN, f64::max);
            let min = eig.iter().cloned().fold(f64::MAX, f64::min);
            FitError::IllConditioned {
                cond: (max / min).abs(),
            }
        })?;
        let z = chol.solve(&b_vec);
        for knot in 1..m {
            let base = 3 * (knot - 1);
            states[knot].0[axis] = z[base];
            states[knot].1[axis] = z[base + 1];
            states[knot].2[axis] = z[base + 2];
        }
    }

    PolynomialTrajectory::from_hermite_data(knot_times, &states)
}

/// One trajectory per ratio in the grid, fidelity fixed at 1. Per-candidate
/// failures are reported without aborting the batch.
pub fn generate_candidates(
    points: &[(f64, Vector2<f64>)],
    r_grid: &[f64],
) -> Vec<Result<PolynomialTrajectory, FitError>> {
    use rayon::prelude::*;
    r_grid
        .par_iter()
        .map(|&r| fit_polyline(points, &FitWeights::from_ratio(r)))
        .collect()
}

/// Gauss-Legendre 8-point rule on [0, 1].
#[allow(clippy::excessive_precision)]
const GL8: [(f64, f64); 8] = [
    (0.019855071751231884, 0.050_614_268_145_188_13),
    (0.101_666_761_293_186_64, 0.111_190_517_226_687_24),
    (0.237_233_795_041_835_5, 0.156_853_322_938_943_63),
    (0.408_282_678_752_175_1, 0.181_341_891_689_181),
    (0.591_717_321_247_825, 0.181_341_891_689_181),
    (0.762_766_204_958_164_5, 0.156_853_322_938_943_63),
    (0.898_333_238_706_813_4, 0.111_190_517_226_687_24),
    (0.980_144_928_248_768_1, 0.050_614_268_145_188_13),
];

/// Inverse of the quintic Hermite constraint matrix on the unit interval.
fn hermite_basis_inverse() -> Matrix6<f64> {
    #[rustfmt::skip]
    let m = Matrix6::new(
        1.0, 0.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 2.0, 0.0, 0.0, 0.0,
        1.0, 1.0, 1.0, 1.0, 1.0, 1.0,
        0.0, 1.0, 2.0, 3.0, 4.0, 5.0,
        0.0, 0.0, 2.0, 6.0, 12.0, 20.0,
    );
    m.try_inverse()
        .expect("Hermite constraint matrix is invertible")
}

/// Gram matrix of unit-interval monomials: S[a][b] = 1 / (a + b + 1).
fn monomial_gram() -> Matrix6<f64> {
    Matrix6::from_fn(|a, b| 1.0 / (a + b + 1) as f64)
}

/// Gram matrix of third derivatives of unit-interval monomials.
fn jerk_gram() -> Matrix6<f64> {
    Matrix6::from_fn(|a, b| {
        if a < 3 || b < 3 {
            0.0
        } else {
            let ca = (a * (a - 1) * (a - 2)) as f64;
            let cb = (b * (b - 1) * (b - 2)) as f64;
            ca * cb / (a + b - 5) as f64
        }
    })
}
