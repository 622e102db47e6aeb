//! Point-level affordance learning for articulated objects in cluttered
//! desk-scale scenes.
//!
//! The crate covers the whole pipeline: procedural cabinet scenes with
//! movable drawers and doors, labeled point-cloud extraction, an occlusion
//! field that summarizes scene geometry relative to a robot position and a
//! manipulation point, a geometric ground-truth labeler, dataset collection
//! with contrastive triplets, a small hand-differentiated network stack, and
//! the evaluation harness with its metrics and file formats.
//!
//! All numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! pipeline itself runs in `f64`, see the aliases at the crate root.

pub mod config;
pub mod dataset;
pub mod field;
pub mod geometry;
pub mod io;
pub mod learn;
pub mod metrics;
pub mod oracle;
pub mod protocol;
pub mod scalar;
pub mod scene;

pub use scalar::Real;

/// Library version, surfaced in provenance headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Scalar the shipped pipeline runs in.
pub type R = f64;

pub type Vec3f = geometry::Vec3<f32>;
pub type Vec3d = geometry::Vec3<f64>;
pub type TransformF = geometry::RigidTransform<f32>;
pub type TransformD = geometry::RigidTransform<f64>;
pub type SceneD = scene::Scene<R>;
pub type CloudD = scene::LabeledCloud<R>;
pub type ModelD = learn::Model<R>;
