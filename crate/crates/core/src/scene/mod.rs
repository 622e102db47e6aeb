//! Articulated cabinet scenes: a static body, movable panels on prismatic or
//! revolute joints, floor occluders, and a robot base position.
//!
//! Conventions: z is up, the floor is z = 0, the cabinet front face lies in
//! the x = 0 plane facing +x, and the robot stands on the floor at x > 0.

mod cloud;
mod gen;

pub use cloud::{
    augmented_cloud, furthest_point_indices, sample_cloud, LabeledCloud, PointSample, SegClass,
};
pub use gen::{
    augment_positive, generate_scene, sample_negative_point, OccluderFamily, Region2, SceneSpec,
    DEFAULT_AUGMENT_BUDGET, NOVEL_FAMILIES, TRAIN_FAMILIES,
};

use crate::geometry::{
    primitives_clear, Mat3, OrientedBox, Primitive, RigidTransform, UnitVec3, Vec3,
};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("no valid placement found after {attempts} attempts")]
    PlacementFailure { attempts: u32 },
    #[error("no label-preserving augmentation found within {budget} attempts")]
    AugmentFailure { budget: u32 },
    #[error("joint state {state} outside range [{lo}, {hi}]")]
    OutOfRange { state: f64, lo: f64, hi: f64 },
    #[error("scene is inconsistent: {detail}")]
    InvalidScene { detail: String },
    #[error("cloud has no eligible part point other than the anchor")]
    NoCandidatePoints,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Prismatic,
    Revolute,
}

/// One degree of freedom. Prismatic joints translate along `axis`; revolute
/// joints rotate about the line through `anchor` with direction `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Joint<S: Real> {
    pub kind: JointKind,
    pub axis: UnitVec3<S>,
    pub anchor: Vec3<S>,
    pub range: [S; 2],
    pub state: S,
}

impl<S: Real> Joint<S> {
    /// Rigid motion of the attached part at joint value `state`, relative to
    /// the rest pose (state 0).
    pub fn motion(&self, state: S) -> RigidTransform<S> {
        match self.kind {
            JointKind::Prismatic => {
                RigidTransform::translation_of(self.axis.as_vec().scaled(state))
            }
            JointKind::Revolute => {
                let rot = Mat3::from_axis_angle(self.axis, state);
                let t = self.anchor - rot.mul_vec(self.anchor);
                RigidTransform::from_parts(rot, t)
            }
        }
    }

    /// Direction of motion of world point `p` per unit increase of the joint
    /// value, evaluated at the current state. Zero length for revolute
    /// points on the axis.
    pub fn point_velocity(&self, p: Vec3<S>) -> Vec3<S> {
        match self.kind {
            JointKind::Prismatic => self.axis.as_vec(),
            JointKind::Revolute => self.axis.as_vec().cross(p - self.anchor),
        }
    }
}

/// Movable panel plus an optional handle box that moves with it. Shapes are
/// stored in the rest pose; `joint.state` places them in the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Part<S: Real> {
    pub shape: OrientedBox<S>,
    pub handle: Option<OrientedBox<S>>,
    pub joint: Joint<S>,
}

impl<S: Real> Part<S> {
    /// Panel and handle at joint value `state`.
    pub fn solids_at(&self, state: S) -> Vec<OrientedBox<S>> {
        let t = self.joint.motion(state);
        let mut v = vec![self.shape.transformed(&t)];
        if let Some(h) = &self.handle {
            v.push(h.transformed(&t));
        }
        v
    }

    pub fn solids(&self) -> Vec<OrientedBox<S>> {
        self.solids_at(self.joint.state)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct ArticulatedTarget<S: Real> {
    pub body: Vec<OrientedBox<S>>,
    pub parts: Vec<Part<S>>,
}

impl<S: Real> ArticulatedTarget<S> {
    /// Copy with one joint moved; rejects values outside the joint range.
    pub fn with_joint_state(&self, part: usize, state: S) -> Result<Self, SceneError> {
        let j = &self.parts[part].joint;
        let (lo, hi) = (j.range[0], j.range[1]);
        if state < lo || state > hi {
            return Err(SceneError::OutOfRange {
                state: state.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        let mut out = self.clone();
        out.parts[part].joint.state = state;
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Occluder<S: Real> {
    pub primitive: Primitive<S>,
    pub pose: RigidTransform<S>,
    pub family: OccluderFamily,
}

impl<S: Real> Occluder<S> {
    pub fn world(&self) -> Primitive<S> {
        self.primitive.transformed(&self.pose)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Scene<S: Real> {
    pub id: u64,
    pub rng_seed: u64,
    pub robot: Vec3<S>,
    pub target: ArticulatedTarget<S>,
    pub occluders: Vec<Occluder<S>>,
}

/// World-space solid with its segmentation label and handle flag.
#[derive(Clone, Debug)]
pub struct LabeledSolid<S: Real> {
    pub seg: SegClass,
    pub is_handle: bool,
    pub solid: Primitive<S>,
}

impl<S: Real> Scene<S> {
    /// All world-space solids in a fixed order: body boxes, then per part
    /// the panel and its handle, then occluders.
    pub fn solids(&self) -> Vec<LabeledSolid<S>> {
        let mut out = Vec::new();
        for b in &self.target.body {
            out.push(LabeledSolid {
                seg: SegClass::Body,
                is_handle: false,
                solid: Primitive::Box(*b),
            });
        }
        for (i, part) in self.target.parts.iter().enumerate() {
            let t = part.joint.motion(part.joint.state);
            out.push(LabeledSolid {
                seg: SegClass::Part(i as u32),
                is_handle: false,
                solid: Primitive::Box(part.shape.transformed(&t)),
            });
            if let Some(h) = &part.handle {
                out.push(LabeledSolid {
                    seg: SegClass::Part(i as u32),
                    is_handle: true,
                    solid: Primitive::Box(h.transformed(&t)),
                });
            }
        }
        for (j, occ) in self.occluders.iter().enumerate() {
            out.push(LabeledSolid {
                seg: SegClass::Occluder(j as u32),
                is_handle: false,
                solid: occ.world(),
            });
        }
        out
    }

    pub fn occluder_solids(&self) -> Vec<Primitive<S>> {
        self.occluders.iter().map(|o| o.world()).collect()
    }

    /// Solids that stay fixed while `moving_part` is manipulated: the body,
    /// every other part, and all occluders.
    pub fn static_solids_excluding(&self, moving_part: usize) -> Vec<Primitive<S>> {
        let mut out: Vec<Primitive<S>> =
            self.target.body.iter().map(|b| Primitive::Box(*b)).collect();
        for (i, part) in self.target.parts.iter().enumerate() {
            if i == moving_part {
                continue;
            }
            for s in part.solids() {
                out.push(Primitive::Box(s));
            }
        }
        out.extend(self.occluder_solids());
        out
    }

    /// Structural consistency: solids clear of each other where required,
    /// robot outside everything, joints within range, handles attached.
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |detail: String| Err(SceneError::InvalidScene { detail });
        let step = S::of(0.005);
        let tol = S::of(-1e-6);

        for (i, part) in self.target.parts.iter().enumerate() {
            let j = &part.joint;
            if j.state < j.range[0] || j.state > j.range[1] {
                return bad(format!("part {i} state outside range"));
            }
            // Rest pose must not sink panels into the body.
            for solid in part.solids_at(j.range[0]) {
                for b in &self.target.body {
                    if primitives_clear(
                        &Primitive::Box(solid),
                        &Primitive::Box(*b),
                        tol,
                        step,
                    ) == false
                    {
                        return bad(format!("part {i} interpenetrates body at rest"));
                    }
                }
            }
            if let Some(h) = &part.handle {
                if crate::geometry::primitives_clear(
                    &Primitive::Box(*h),
                    &Primitive::Box(part.shape),
                    S::zero(),
                    step,
                ) {
                    return bad(format!("part {i} handle detached from its panel"));
                }
            }
        }

        let target_solids: Vec<Primitive<S>> = self
            .solids()
            .into_iter()
            .filter(|s| !matches!(s.seg, SegClass::Occluder(_)))
            .map(|s| s.solid)
            .collect();
        let occs = self.occluder_solids();
        for (j, o) in occs.iter().enumerate() {
            for t in &target_solids {
                if !primitives_clear(o, t, tol, step) {
                    return bad(format!("occluder {j} interpenetrates target"));
                }
            }
            for (j2, o2) in occs.iter().enumerate().skip(j + 1) {
                if !primitives_clear(o, o2, tol, step) {
                    return bad(format!("occluders {j} and {j2} interpenetrate"));
                }
            }
        }

        for s in self.solids() {
            if s.solid.signed_distance(self.robot).as_f64() <= 0.0 {
                return bad("robot position inside a solid".into());
            }
        }
        Ok(())
    }

    /// Scene reflected across the y = 0 plane. Labels and ordering are
    /// preserved; revolute axes flip sign so positive joint values keep
    /// their opening direction in the mirrored world.
    pub fn mirror_y(&self) -> Self {
        let mirror_box = |b: &OrientedBox<S>| b.mirror_y();
        let target = ArticulatedTarget {
            body: self.target.body.iter().map(mirror_box).collect(),
            parts: self
                .target
                .parts
                .iter()
                .map(|p| {
                    let axis = match p.joint.kind {
                        JointKind::Prismatic => p.joint.axis.mirror_y(),
                        JointKind::Revolute => p.joint.axis.mirror_y().neg(),
                    };
                    Part {
                        shape: p.shape.mirror_y(),
                        handle: p.handle.as_ref().map(mirror_box),
                        joint: Joint {
                            kind: p.joint.kind,
                            axis,
                            anchor: p.joint.anchor.mirror_y(),
                            range: p.joint.range,
                            state: p.joint.state,
                        },
                    }
                })
                .collect(),
        };
        let occluders = self
            .occluders
            .iter()
            .map(|o| Occluder {
                primitive: o.primitive.mirror_y(),
                pose: RigidTransform::from_parts(
                    o.pose.rotation.mirror_y(),
                    o.pose.translation.mirror_y(),
                ),
                family: o.family,
            })
            .collect();
        Scene {
            id: self.id,
            rng_seed: self.rng_seed,
            robot: self.robot.mirror_y(),
            target,
            occluders,
        }
    }
}
