//! Two-layer overtaking trajectory planner.
//!
//! The upper layer searches a layered space-time graph over the road for
//! collision-free trajectory skeletons of distinct topology classes. The
//! lower layer fits each skeleton with piecewise-quintic candidates across a
//! fidelity/smoothness sweep, recovers vehicle states and inputs through
//! differential flatness, and keeps the candidate whose sampled states stay
//! deepest inside the zonotope reachable tube of the linearized model. A
//! pure-pursuit harness closes the loop for validating the selection.

pub mod error;
pub mod evaluate;
pub mod fit;
pub mod flatness;
pub mod geometry;
pub mod pipeline;
pub mod reach;
pub mod scenario;
pub mod search;
pub mod tracking;

pub use error::{Error, Result};
