//! Scenario files: strict JSON schema, defaults, validation, and
//! construction of the geometric world.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::ScenarioError;
use crate::flatness::VehicleParams;
use crate::geometry::{Centerline, ObstacleTrajectory, RoadBounds, TimedPose};
use crate::reach::{FeasibilityWeights, TubeParams};
use crate::search::{CostWeights, SearchParams};
use crate::tracking::PurePursuitConfig;

/// Centerline shape specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CenterlineSpec {
    Straight { length: f64 },
    Arc { radius: f64, angle: f64 },
    Waypoints { points: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadSpec {
    pub centerline: CenterlineSpec,
    pub half_width: f64,
    #[serde(default = "default_max_spacing")]
    pub max_spacing: f64,
}

fn default_max_spacing() -> f64 {
    Centerline::DEFAULT_MAX_SPACING
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EgoSpec {
    pub start_s: f64,
    pub start_l: f64,
    pub speed: f64,
    pub heading: f64,
}

impl Default for EgoSpec {
    fn default() -> Self {
        EgoSpec {
            start_s: 0.0,
            start_l: 0.0,
            speed: 12.0,
            heading: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    pub s: f64,
    #[serde(default)]
    pub l: f64,
    pub t_min: f64,
    pub t_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSpec {
    #[serde(default = "default_obstacle_length")]
    pub length: f64,
    #[serde(default = "default_obstacle_width")]
    pub width: f64,
    pub states: Vec<TimedPose>,
}

fn default_obstacle_length() -> f64 {
    4.3
}

fn default_obstacle_width() -> f64 {
    1.9
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSpec {
    pub r_alpha_grid: Vec<f64>,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec {
            r_alpha_grid: vec![0.0, 0.005, 0.01, 0.015, 0.025, 0.05, 0.1],
        }
    }
}

/// Full scenario description. Every section except the road and obstacles is
/// optional and falls back to the documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub road: RoadSpec,
    #[serde(default)]
    pub ego: EgoSpec,
    #[serde(default)]
    pub goal: Option<GoalSpec>,
    pub obstacles: Vec<ObstacleSpec>,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub search: SearchParams,
    #[serde(default)]
    pub cost_weights: CostWeights,
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub feasibility: FeasibilityWeights,
    #[serde(default)]
    pub tube: TubeParams,
    #[serde(default = "default_n_rs")]
    pub n_rs: usize,
    #[serde(default)]
    pub tracking: PurePursuitConfig,
}

fn default_seed() -> u64 {
    1
}

fn default_n_rs() -> usize {
    15
}

impl ScenarioConfig {
    /// Parses and validates a scenario from JSON text.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let mut config: ScenarioConfig = serde_json::from_str(text)?;
        config.validate()?;
        config.apply_goal_default();
        Ok(config)
    }

    /// Loads a scenario file.
    pub fn load(path: &std::path::Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ScenarioError::invalid("path", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    fn centerline_length(&self) -> f64 {
        match &self.road.centerline {
            CenterlineSpec::Straight { length } => *length,
            CenterlineSpec::Arc { radius, angle } => radius * angle.abs(),
            CenterlineSpec::Waypoints { points } => points
                .windows(2)
                .map(|w| {
                    let dx = w[1][0] - w[0][0];
                    let dy = w[1][1] - w[0][1];
                    (dx * dx + dy * dy).sqrt()
                })
                .sum(),
        }
    }

    /// Default goal: 10 m short of the road end on the ego's lateral line,
    /// with an arrival window bracketing the constant-speed nominal time.
    fn apply_goal_default(&mut self) {
        if self.goal.is_none() {
            let s = (self.centerline_length() - 10.0).max(self.ego.start_s + 10.0);
            let nominal = (s - self.ego.start_s) / self.ego.speed;
            self.goal = Some(GoalSpec {
                s,
                l: self.ego.start_l,
                t_min: nominal * 0.95,
                t_max: nominal * 1.35,
            });
        }
    }

    /// Resolved goal (available after construction through `from_json`/`load`).
    pub fn goal_resolved(&self) -> GoalSpec {
        self.goal.expect("goal defaults are applied at load time")
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        fn err(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
            ScenarioError::invalid(field, message)
        }
        match &self.road.centerline {
            CenterlineSpec::Straight { length } if *length <= 0.0 => {
                return Err(err("road.centerline.length", "must be positive"));
            }
            CenterlineSpec::Arc { radius, angle } => {
                if *radius <= 0.0 {
                    return Err(err("road.centerline.radius", "must be positive"));
                }
                if *angle == 0.0 {
                    return Err(err("road.centerline.angle", "must be nonzero"));
                }
            }
            CenterlineSpec::Waypoints { points } if points.len() < 2 => {
                return Err(err("road.centerline.points", "need at least 2 waypoints"));
            }
            _ => {}
        }
        if self.road.half_width <= 0.0 {
            return Err(err("road.half_width", "must be positive"));
        }
        if self.road.max_spacing <= 0.0 {
            return Err(err("road.max_spacing", "must be positive"));
        }
        if self.ego.speed <= 0.0 || self.ego.speed > self.vehicle.v_max {
            return Err(err(
                "ego.speed",
                format!("must be in (0, v_max = {}]", self.vehicle.v_max),
            ));
        }
        if self.ego.start_l.abs() > self.road.half_width {
            return Err(err("ego.start_l", "outside the road"));
        }
        let length = self.centerline_length();
        if let Some(goal) = &self.goal {
            if goal.s <= self.ego.start_s || goal.s > length {
                return Err(err("goal.s", "must lie ahead of the ego within the road"));
            }
            if goal.l.abs() > self.road.half_width {
                return Err(err("goal.l", "outside the road"));
            }
            if goal.t_max < goal.t_min {
                return Err(err("goal.t_max", "window is inverted"));
            }
            let earliest = (goal.s - self.ego.start_s) / self.vehicle.v_max;
            if goal.t_max < earliest {
                return Err(err(
                    "goal.t_max",
                    format!("unreachable: earliest feasible arrival is {earliest:.2} s"),
                ));
            }
        }
        for (i, obstacle) in self.obstacles.iter().enumerate() {
            if obstacle.states.is_empty() {
                return Err(err(format!("obstacles[{i}].states"), "must not be empty"));
            }
            if obstacle.length <= 0.0 || obstacle.width <= 0.0 {
                return Err(err(format!("obstacles[{i}]"), "footprint must be positive"));
            }
            for (j, w) in obstacle.states.windows(2).enumerate() {
                if w[1].t <= w[0].t {
                    return Err(err(
                        format!("obstacles[{i}].states"),
                        format!("timestamps not strictly increasing at index {}", j + 1),
                    ));
                }
            }
        }
        for (i, &r) in self.fit.r_alpha_grid.iter().enumerate() {
            if r < 0.0 {
                return Err(err(format!("fit.r_alpha_grid[{i}]"), "must be nonnegative"));
            }
        }
        if self.fit.r_alpha_grid.is_empty() {
            return Err(err("fit.r_alpha_grid", "must not be empty"));
        }
        if self.n_rs == 0 {
            return Err(err("n_rs", "must be at least 1"));
        }
        if self.search.ds <= 0.0 || self.search.dl <= 0.0 || self.search.dt <= 0.0 {
            return Err(err("search", "sampling steps must be positive"));
        }
        if self.search.n_skeletons == 0 {
            return Err(err("search.n_skeletons", "must be at least 1"));
        }
        if self.cost_weights.v_max <= 0.0 {
            return Err(err("cost_weights.v_max", "must be positive"));
        }
        if self.tracking.sim_step <= 0.0 {
            return Err(err("tracking.sim_step", "must be positive"));
        }
        Ok(())
    }

    /// Builds the geometric world described by the scenario.
    pub fn build_world(
        &self,
    ) -> Result<(Centerline, RoadBounds, Vec<ObstacleTrajectory>), crate::error::Error> {
        let line = match &self.road.centerline {
            CenterlineSpec::Straight { length } => {
                Centerline::straight(*length, self.road.max_spacing)?
            }
            CenterlineSpec::Arc { radius, angle } => {
                Centerline::arc(*radius, *angle, self.road.max_spacing)?
            }
            CenterlineSpec::Waypoints { points } => {
                let pts: Vec<Vector2<f64>> =
                    points.iter().map(|p| Vector2::new(p[0], p[1])).collect();
                Centerline::from_waypoints(&pts, self.road.max_spacing)?
            }
        };
        let bounds = RoadBounds {
            half_width: self.road.half_width,
            s_min: 0.0,
            s_max: line.total_length(),
        };
        let obstacles = self
            .obstacles
            .iter()
            .map(|o| ObstacleTrajectory::new(o.states.clone(), o.length, o.width))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((line, bounds, obstacles))
    }

    /// Planning inflation: configured margin plus the ego half-diagonal.
    pub fn planning_inflation(&self) -> f64 {
        self.search.margin + self.vehicle.half_diagonal()
    }
}
