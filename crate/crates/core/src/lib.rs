//! Optimal actuator positioning and design for controlled linear diffusion.
//!
//! The closed-loop performance of an actuator region `ω` is measured by the
//! optimal value of an infinite-horizon linear-quadratic regulator acting on a
//! semi-discretized heat equation `ẏ = A y + B u`, where `B` is the load of the
//! indicator function of `ω`. On top of this cost the crate provides
//!
//! - shape derivatives driving rigid translations of a fixed actuator
//!   ([`optimize::position_descent`]),
//! - topological derivatives driving a level-set design loop with a volume
//!   penalty and continuation in the penalty weight
//!   ([`optimize::levelset_design`], [`optimize::continuation`]),
//! - the worst-case initial condition variant, where the cost is the largest
//!   generalized eigenvalue of the Riccati operator against the `H¹₀` form.
//!
//! Modules are layered bottom-up: [`discretization`] → [`geometry`] →
//! [`riccati`] → [`lqr`] → [`sensitivity`] → [`optimize`].

pub mod catalog;
pub mod discretization;
pub mod error;
pub mod geometry;
pub mod lqr;
pub mod optimize;
pub mod output;
pub mod riccati;
pub mod sensitivity;

pub use error::{Error, Result};
