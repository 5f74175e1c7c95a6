//! Elastic-tube trajectory refinement.
//!
//! The back-end takes the feasible control-point placement produced by the
//! search front-end, grows a tube of local maximum-volume free-space bubbles
//! around it, and re-places the points inside the tube by solving a convex
//! QCQP: quadratic span-cost objective, ball constraints keeping each point
//! in its bubble, linear derivative-bound constraints, and pinned endpoints.
//! A final safety pass densifies control points wherever the curve strays
//! far enough from its control polygon to matter.

pub mod qcqp;
pub mod safety;
pub mod tube;

pub use qcqp::{
    check_two_level_inflation, solve_placement_qcqp, InflationCheck, PlacementQcqp, QcqpError,
    QcqpOutcome, SolveOptions,
};
pub use safety::{enforce_safety, SafetyError, SafetyParams};
pub use tube::{elastic_tube, ElasticTube, TubeError, TubeParams};
