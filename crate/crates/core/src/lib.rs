//! Equivariant observer for visual SLAM on the `SE(3) × (SO(3) × MR)ⁿ` symmetry
//! group, an EKF baseline on the raw pose-and-map state, and a simulation
//! harness that compares the two.
//!
//! Module map:
//! - [`lie`]: SO(3), SE(3), and positive-scalar primitives.
//! - [`group`]: the symmetry group, its actions on states and outputs, and the velocity lift.
//! - [`system`]: ground-truth kinematics, the output map, and the noisy sensor.
//! - [`observer`]: the equivariant observer.
//! - [`ekf`]: the EKF baseline.
//! - [`sim`]: scenarios, trials, metrics, and sweeps.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ekf;
pub mod error;
pub mod estimate;
pub mod group;
pub mod lie;
pub mod observer;
pub mod sim;
pub mod system;

pub use error::{Error, Result};
