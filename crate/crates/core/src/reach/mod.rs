//! Reachable-tube computation for the linearized bicycle model along a
//! reference trajectory, set containment, feasibility classification and the
//! deviation score used to rank candidates.

mod simplex;
mod taylor;
mod tube;
mod zonotope;

pub use taylor::{matrix_exp, taylor_terms, IntervalMatrix, TaylorTerms};
pub use tube::{
    assess_feasibility, linear_tube_step, linearize_model, propagate_linear_tube, propagate_tube,
    score_jrs, Feasibility, FeasibilityWeights, JrsScore, LinearizedStep, ReachTube, TubeParams,
};
pub use zonotope::Zonotope;
