//! Safe quadrotor trajectory tracking.
//!
//! An outer-loop model-predictive controller on a linear augmented model
//! (position, velocity, virtual acceleration and jerk, driven by snap) keeps
//! sampled-data high-order barrier conditions, a flatness map turns its
//! output into thrust and attitude targets, and a tilt-prioritized attitude
//! law closes the loop on a nonlinear rigid-body simulator.

pub mod attitude;
pub mod barrier;
pub mod cone;
pub mod error;
pub mod flatness;
pub mod harness;
pub mod mpc;
pub mod sim;

pub use error::{Error, Result};
