//! Trajectory optimization for autonomous camera drones.
//!
//! The planner minimizes
//! `J = J_smooth + lambda1 J_obs + lambda2 J_occ + lambda3 J_shot`
//! over a position-only trajectory on a uniform time grid, by covariant
//! gradient descent on a truncated signed distance field of the environment.
//! The [`sim`] module closes the loop with a Kalman-filtered actor forecast
//! and receding-horizon replanning, and hosts the randomized benchmark.

pub mod cli;
pub mod config;
pub mod costs;
pub mod error;
pub mod exec;
pub mod forecast;
pub mod geom;
pub mod optimizer;
pub mod shot;
pub mod sim;
pub mod tsdf;

pub use error::{Error, Result};
pub use exec::Execution;
pub use geom::{BoundaryCondition, Trajectory, Vec3};
