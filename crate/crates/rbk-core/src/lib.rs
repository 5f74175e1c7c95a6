//! Kinodynamic trajectory planning on uniform B-splines.
//!
//! The crate turns a position-only grid search into a dynamically feasible,
//! time-parameterized search over B-spline control points, refines the result
//! inside an elastic tube of free-space bubbles by solving a convex QCQP, and
//! drives a receding-horizon replanning loop on top of both.
//!
//! Everything here is pure computation over immutable inputs: no IO, no
//! clocks, no threads. The companion `rbk-sim` crate adds scenario files, a
//! CLI, wall-clock timing and benchmark harnesses.
//!
//! Module map:
//! - [`spline`]: uniform B-spline evaluation, closed-form control cost,
//!   linear feasibility checks, polyline refinement.
//! - [`world`]: occupancy worlds with two-level inflated configuration
//!   spaces, exact nearest-obstacle queries, synthetic map generators.
//! - [`search`]: the greedy B-spline kinodynamic (RBK) search.
//! - [`oracle`]: exact full-scale span search and position-only A*
//!   baselines for optimality studies.
//! - [`elastic`]: elastic tube expansion, QCQP control-point refinement,
//!   and safety enforcement.
//! - [`replan`]: control-point lifecycle and the receding-horizon loop.

#![no_std]

extern crate alloc;

pub mod elastic;
pub mod linalg;
pub mod oracle;
pub mod replan;
pub mod rng;
pub mod search;
pub mod spline;
pub mod world;

pub use linalg::Vec3;
