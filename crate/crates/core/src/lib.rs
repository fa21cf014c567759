//! Differentiable bone-driven face rig renderer.
//!
//! The crate is organized bottom-up:
//!
//! - [`geom`]: homogeneous transform algebra, generic over the scalar type;
//! - [`rig`]: the bone-driven face model (skeleton, skinning, blendshapes,
//!   controller schema) plus the deterministic default-rig generator and the
//!   `rigdiff/1` schema file format;
//! - [`raster`]: perspective projection, z-buffered triangle rasterization
//!   with perspective-correct barycentrics, and Lambertian shading;
//! - [`grad`]: reverse-mode vector-Jacobian products through the whole
//!   parameter-to-image pipeline and the finite-difference check harness.
//!
//! All reference-path math is double precision; the type aliases below fix
//! the concrete scalar used across the pipeline.

pub mod error;
pub mod geom;
pub mod grad;
pub mod raster;
pub mod real;
pub mod rig;

pub use error::CoreError;

/// Concrete scalar for the reference path.
pub type Real64 = f64;
/// 3-vector over the reference scalar.
pub type Vec3 = geom::Vector3<f64>;
/// Row-major homogeneous transform over the reference scalar.
pub type Mat4 = geom::Matrix4<f64>;
/// Translation/rotation/scale triple over the reference scalar.
pub type TransformTrs = geom::Trs<f64>;
