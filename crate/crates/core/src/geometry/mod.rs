//! Vectors, rigid transforms, and the solid primitives scenes are built
//! from, plus the distance and sweep queries the labeler relies on.

mod shape;
mod transform;
mod vec;

pub use shape::{
    capsule_hits_primitive, primitives_clear, segment_point_distance, segment_segment_distance,
    Capsule, Cylinder, OrientedBox, Primitive, Sphere,
};
pub use transform::{Mat3, RigidTransform};
pub use vec::{UnitVec3, Vec3};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("normal has length {norm}, expected 1 within 1e-9")]
    NonUnitNormal { norm: f64 },
    #[error("transform is not a proper rotation: {detail}")]
    DegenerateTransform { detail: String },
    #[error("{what} must be strictly positive, got {value}")]
    NonPositiveExtent { what: &'static str, value: f64 },
}
