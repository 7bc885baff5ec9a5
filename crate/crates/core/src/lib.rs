//! Anticipatory motion planning for serial manipulators sharing a workspace
//! with a person.
//!
//! The planner solves a short-horizon trajectory optimization problem over
//! joint velocities, trading off six per-knot costs (human separation,
//! end-effector visibility, legibility, nominal tracking, smoothness, goal
//! pose) against stochastic predictions of the human's motion, and replans
//! in a receding-horizon loop.
//!
//! Module map:
//!
//! - [`kinematics`]: serial-chain forward kinematics and Jacobians
//! - [`human_prediction`]: Gaussian human motion predictions
//! - [`costs`]: the per-knot cost terms
//! - [`solver`]: augmented-Lagrangian iLQR
//! - [`mpc`]: the receding-horizon loop
//! - [`scenario`]: scenario files and the seeded scenario generator
//! - [`metrics`]: trajectory evaluation
//! - [`cli`]: the `anticip-mpc` command line
//!
//! See the `examples/` directory for one runnable program per capability.

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod costs;
pub mod error;
pub mod human_prediction;
pub mod kinematics;
pub mod metrics;
pub mod mpc;
pub mod scenario;
pub mod solver;

pub use error::{Error, Result};
