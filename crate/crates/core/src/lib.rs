//! Monocular model-based face capture and reenactment.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: the linear face prior (geometry, albedo, expression) and a
//!   deterministic synthetic prior generator.
//! - [`imaging`]: rigid pose, pinhole camera, spherical-harmonics shading,
//!   the software rasterizer and image pyramids.
//! - [`energy`]: photometric, landmark and prior residuals with analytic
//!   Jacobians, evaluated against a frozen rasterization.
//! - [`solver`]: IRLS / Gauss-Newton with a Jacobi-preconditioned conjugate
//!   gradient inner solver and the coarse-to-fine driver.
//! - [`bundling`]: joint multi-keyframe identity estimation.
//! - [`tracking`]: per-frame expression, pose and illumination tracking.
//! - [`transfer`]: expression transfer in blendshape coefficient space.
//! - [`mouth`]: mouth exemplar database, retrieval and compositing.

pub mod bundling;
pub mod container;
pub mod energy;
pub mod error;
pub mod imaging;
pub mod model;
pub mod mouth;
pub mod solver;
pub mod tracking;
pub mod transfer;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
