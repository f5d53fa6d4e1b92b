//! Numerical core for turning 3D object flow into robot actions.
//!
//! Everything here is pure computation over in-memory data: rigid
//! transforms and pinhole geometry, depth calibration and flow lifting,
//! serial-chain kinematics, flow-tracking trajectory optimization, a
//! quasi-static planar pushing simulator with a random-shooting planner,
//! and flow-based door rewards. File formats and the command line live in
//! the `objflow` crate.

#![no_std]
// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod depthflow;
pub mod door;
mod error;
pub mod kinematics;
pub mod push;
pub mod rng;
pub mod se3;
pub mod trajopt;

pub use error::{Error, Result};
pub use se3::{CameraModel, PointSet3, RigidTransform, Vec3};
