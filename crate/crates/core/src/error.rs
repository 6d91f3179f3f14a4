//! Error types shared across the planner.

use thiserror::Error;

/// Top-level error for all planning stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("skeleton search: {0}")]
    Search(#[from] SearchError),
    #[error("trajectory fit: {0}")]
    Fit(#[from] FitError),
    #[error("flatness: {0}")]
    Flatness(#[from] FlatnessError),
    #[error("reachability: {0}")]
    Reach(#[from] ReachError),
    #[error("tracking: {0}")]
    Tracking(#[from] TrackingError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("no feasible trajectory: {reasons:?}")]
    NoFeasibleTrajectory { reasons: Vec<String> },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("arc length {s} outside centerline range [0, {max}]")]
    ArcLengthOutOfRange { s: f64, max: f64 },
    #[error(
        "point ({x}, {y}) is {dist} m from the centerline, beyond the projection tolerance {tol}"
    )]
    ProjectionOutOfRange { x: f64, y: f64, dist: f64, tol: f64 },
    #[error("centerline needs at least 2 samples")]
    DegenerateCenterline,
    #[error("centerline sample spacing {gap} exceeds maximum {max} at index {index}")]
    SpacingExceeded { gap: f64, max: f64, index: usize },
    #[error("obstacle trajectory needs at least one state")]
    EmptyObstacleTrajectory,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("no skeleton reaches the goal ({diagnostic})")]
    NoPathToGoal { diagnostic: String },
    #[error("skeletons do not share endpoints; topology comparison undefined")]
    MismatchedEndpoints,
    #[error("skeleton has coincident consecutive nodes at index {index}")]
    DegenerateAngle { index: usize },
    #[error("invalid search parameters: {0}")]
    BadParams(String),
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("skeleton needs at least 2 nodes to fit")]
    TooFewNodes,
    #[error(
        "normal system is ill-conditioned (condition estimate {cond:.3e}); check knot spacing"
    )]
    IllConditioned { cond: f64 },
    #[error("knot times must be strictly increasing (violation at index {index})")]
    NonIncreasingKnots { index: usize },
}

#[derive(Debug, Error)]
pub enum FlatnessError {
    #[error("speed {speed:.3e} m/s at t = {t:.4} s is below the minimum {min:.1e} m/s; heading and steering are undefined")]
    DegenerateSpeed { t: f64, speed: f64, min: f64 },
}

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("steering reference {delta} rad is at the tangent singularity")]
    SteeringSingularity { delta: f64 },
    #[error("reference samples must be spaced {expected} s apart, found {found} at step {step}")]
    StepMismatch {
        expected: f64,
        found: f64,
        step: usize,
    },
    #[error("tube needs at least 2 reference samples")]
    TooFewSamples,
}

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("tracking diverged at step {step} (position error {error:.2} m)")]
    Diverged { step: usize, error: f64 },
    #[error("no trajectory point ahead of the vehicle; track end reached")]
    TrackEnd,
    #[error("empty tracking log")]
    EmptyLog,
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid field `{field}`: {message}")]
    Invalid { field: String, message: String },
}

impl ScenarioError {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
