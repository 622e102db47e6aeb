use super::{GeometryError, Mat3, RigidTransform, UnitVec3, Vec3};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Box with arbitrary orientation. `rotation` maps box-local axes to world.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox<S> {
    pub center: Vec3<S>,
    pub half_extents: Vec3<S>,
    pub rotation: Mat3<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere<S> {
    pub center: Vec3<S>,
    pub radius: S,
}

/// Capped cylinder. Occupies `center + t*axis` for |t| <= half_length,
/// within `radius` of the axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Cylinder<S: Real> {
    pub center: Vec3<S>,
    pub axis: UnitVec3<S>,
    pub half_length: S,
    pub radius: S,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub enum Primitive<S: Real> {
    Box(OrientedBox<S>),
    Sphere(Sphere<S>),
    Cylinder(Cylinder<S>),
}

/// Swept sphere between two endpoints.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule<S> {
    pub a: Vec3<S>,
    pub b: Vec3<S>,
    pub radius: S,
}

fn positive<S: Real>(what: &'static str, v: S) -> Result<(), GeometryError> {
    if v.as_f64() > 0.0 {
        Ok(())
    } else {
        Err(GeometryError::NonPositiveExtent {
            what,
            value: v.as_f64(),
        })
    }
}

impl<S: Real> OrientedBox<S> {
    pub fn new(
        center: Vec3<S>,
        half_extents: Vec3<S>,
        rotation: Mat3<S>,
    ) -> Result<Self, GeometryError> {
        positive("box half extent x", half_extents.x)?;
        positive("box half extent y", half_extents.y)?;
        positive("box half extent z", half_extents.z)?;
        Ok(Self {
            center,
            half_extents,
            rotation: rotation.validated_rotation()?,
        })
    }

    pub fn axis_aligned(center: Vec3<S>, half_extents: Vec3<S>) -> Result<Self, GeometryError> {
        Self::new(center, half_extents, Mat3::identity())
    }

    /// World point expressed in box-local coordinates.
    pub fn to_local(&self, p: Vec3<S>) -> Vec3<S> {
        self.rotation.transpose().mul_vec(p - self.center)
    }

    pub fn signed_distance(&self, p: Vec3<S>) -> S {
        let q = self.to_local(p);
        let d = Vec3::new(
            q.x.abs() - self.half_extents.x,
            q.y.abs() - self.half_extents.y,
            q.z.abs() - self.half_extents.z,
        );
        let z = S::zero();
        let outside = Vec3::new(d.x.max(z), d.y.max(z), d.z.max(z)).norm();
        let inside = d.x.max(d.y).max(d.z).min(z);
        outside + inside
    }

    pub fn surface_area(&self) -> S {
        let h = self.half_extents;
        S::of(8.0) * (h.x * h.y + h.y * h.z + h.z * h.x)
    }

    pub fn bounding_radius(&self) -> S {
        self.half_extents.norm()
    }

    pub fn transformed(&self, t: &RigidTransform<S>) -> Self {
        Self {
            center: t.apply(self.center),
            half_extents: self.half_extents,
            rotation: t.rotation.mul_mat(&self.rotation),
        }
    }

    pub fn mirror_y(&self) -> Self {
        Self {
            center: self.center.mirror_y(),
            half_extents: self.half_extents,
            rotation: self.rotation.mirror_y(),
        }
    }
}

impl<S: Real> Sphere<S> {
    pub fn new(center: Vec3<S>, radius: S) -> Result<Self, GeometryError> {
        positive("sphere radius", radius)?;
        Ok(Self { center, radius })
    }

    pub fn signed_distance(&self, p: Vec3<S>) -> S {
        p.dist(self.center) - self.radius
    }

    pub fn surface_area(&self) -> S {
        S::of(4.0 * std::f64::consts::PI) * self.radius * self.radius
    }
}

impl<S: Real> Cylinder<S> {
    pub fn new(
        center: Vec3<S>,
        axis: UnitVec3<S>,
        half_length: S,
        radius: S,
    ) -> Result<Self, GeometryError> {
        positive("cylinder half length", half_length)?;
        positive("cylinder radius", radius)?;
        Ok(Self {
            center,
            axis,
            half_length,
            radius,
        })
    }

    pub fn endpoints(&self) -> (Vec3<S>, Vec3<S>) {
        let d = self.axis.as_vec().scaled(self.half_length);
        (self.center - d, self.center + d)
    }

    /// Exact signed distance via the radial/axial decomposition: the query
    /// reduces to a 2D box in (radial offset, axial offset) coordinates.
    pub fn signed_distance(&self, p: Vec3<S>) -> S {
        let q = p - self.center;
        let zc = q.dot(self.axis.as_vec());
        let radial = (q - self.axis.as_vec().scaled(zc)).norm();
        let dr = radial - self.radius;
        let dz = zc.abs() - self.half_length;
        let z = S::zero();
        let outside = (dr.max(z).powi(2) + dz.max(z).powi(2)).sqrt();
        outside + dr.max(dz).min(z)
    }

    pub fn surface_area(&self) -> S {
        let two_pi_r = S::of(2.0 * std::f64::consts::PI) * self.radius;
        two_pi_r * (self.half_length + self.half_length) + two_pi_r * self.radius
    }

    pub fn transformed(&self, t: &RigidTransform<S>) -> Self {
        Self {
            center: t.apply(self.center),
            axis: UnitVec3::from_vec(t.rotate(self.axis.as_vec())).expect("rotated unit axis"),
            half_length: self.half_length,
            radius: self.radius,
        }
    }

    pub fn mirror_y(&self) -> Self {
        Self {
            center: self.center.mirror_y(),
            axis: self.axis.mirror_y(),
            half_length: self.half_length,
            radius: self.radius,
        }
    }
}

impl<S: Real> Primitive<S> {
    pub fn signed_distance(&self, p: Vec3<S>) -> S {
        match self {
            Primitive::Box(b) => b.signed_distance(p),
            Primitive::Sphere(s) => s.signed_distance(p),
            Primitive::Cylinder(c) => c.signed_distance(p),
        }
    }

    pub fn surface_area(&self) -> S {
        match self {
            Primitive::Box(b) => b.surface_area(),
            Primitive::Sphere(s) => s.surface_area(),
            Primitive::Cylinder(c) => c.surface_area(),
        }
    }

    pub fn bounding_radius(&self) -> S {
        match self {
            Primitive::Box(b) => b.bounding_radius(),
            Primitive::Sphere(s) => s.radius,
            Primitive::Cylinder(c) => (c.half_length * c.half_length + c.radius * c.radius).sqrt(),
        }
    }

    pub fn center(&self) -> Vec3<S> {
        match self {
            Primitive::Box(b) => b.center,
            Primitive::Sphere(s) => s.center,
            Primitive::Cylinder(c) => c.center,
        }
    }

    pub fn transformed(&self, t: &RigidTransform<S>) -> Self {
        match self {
            Primitive::Box(b) => Primitive::Box(b.transformed(t)),
            Primitive::Sphere(s) => Primitive::Sphere(Sphere {
                center: t.apply(s.center),
                radius: s.radius,
            }),
            Primitive::Cylinder(c) => Primitive::Cylinder(c.transformed(t)),
        }
    }

    pub fn mirror_y(&self) -> Self {
        match self {
            Primitive::Box(b) => Primitive::Box(b.mirror_y()),
            Primitive::Sphere(s) => Primitive::Sphere(Sphere {
                center: s.center.mirror_y(),
                radius: s.radius,
            }),
            Primitive::Cylinder(c) => Primitive::Cylinder(c.mirror_y()),
        }
    }
}

/// Distance from `p` to segment `ab`. Degenerate segments collapse to the
/// point distance.
pub fn segment_point_distance<S: Real>(a: Vec3<S>, b: Vec3<S>, p: Vec3<S>) -> S {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq.as_f64() == 0.0 {
        S::zero()
    } else {
        ((p - a).dot(ab) / len_sq).max(S::zero()).min(S::one())
    };
    p.dist(a + ab.scaled(t))
}

/// Closest distance between segments `p1q1` and `p2q2` (Ericson's clamped
/// closest-point scheme). Handles degenerate and parallel segments.
pub fn segment_segment_distance<S: Real>(
    p1: Vec3<S>,
    q1: Vec3<S>,
    p2: Vec3<S>,
    q2: Vec3<S>,
) -> S {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_sq();
    let e = d2.norm_sq();
    let f = d2.dot(r);
    let z = S::zero();
    let o = S::one();
    let eps = S::of(1e-14);

    let (s, t);
    if a <= eps && e <= eps {
        return p1.dist(p2);
    }
    if a <= eps {
        s = z;
        t = (f / e).max(z).min(o);
    } else {
        let c = d1.dot(r);
        if e <= eps {
            t = z;
            s = (-c / a).max(z).min(o);
        } else {
            let b = d1.dot(d2);
            let denom = a * e - b * b;
            let s0 = if denom.as_f64() != 0.0 {
                ((b * f - c * e) / denom).max(z).min(o)
            } else {
                z
            };
            let t0 = (b * s0 + f) / e;
            if t0 < z {
                t = z;
                s = (-c / a).max(z).min(o);
            } else if t0 > o {
                t = o;
                s = ((b - c) / a).max(z).min(o);
            } else {
                t = t0;
                s = s0;
            }
        }
    }
    (p1 + d1.scaled(s)).dist(p2 + d2.scaled(t))
}

/// Number of equal subdivisions used when sampling a sweep of length `len`
/// at spacing at most `step`: the smallest power of two m with m*step >= len.
/// Halving `step` exactly doubles m, so the coarser sample set is always a
/// subset of the finer one.
fn subdivisions<S: Real>(len: S, step: S) -> u64 {
    let mut m: u64 = 1;
    while S::of(m as f64) * step < len {
        m *= 2;
        if m >= 1 << 40 {
            break;
        }
    }
    m
}

/// True iff a sampled point along the capsule axis comes closer to the
/// primitive than the capsule radius. Endpoints are always sampled.
pub fn capsule_hits_primitive<S: Real>(c: &Capsule<S>, prim: &Primitive<S>, step: S) -> bool {
    assert!(step.as_f64() > 0.0, "step must be positive");
    let len = c.a.dist(c.b);
    if len.as_f64() == 0.0 {
        return prim.signed_distance(c.a) < c.radius;
    }
    let m = subdivisions(len, step);
    let ab = c.b - c.a;
    for i in 0..=m {
        let t = S::of(i as f64 / m as f64);
        if prim.signed_distance(c.a + ab.scaled(t)) < c.radius {
            return true;
        }
    }
    false
}

/// Separating-axis test for oriented boxes, inflated by `margin`. Finding a
/// separating axis with that gap proves the boxes are at least `margin`
/// apart; not finding one is treated as contact.
fn boxes_separated<S: Real>(a: &OrientedBox<S>, b: &OrientedBox<S>, margin: S) -> bool {
    let t = b.center - a.center;
    let mut axes: Vec<Vec3<S>> = Vec::with_capacity(15);
    for j in 0..3 {
        axes.push(a.rotation.col(j));
        axes.push(b.rotation.col(j));
    }
    for i in 0..3 {
        for j in 0..3 {
            let cross = a.rotation.col(i).cross(b.rotation.col(j));
            if cross.norm_sq().as_f64() > 1e-12 {
                axes.push(cross);
            }
        }
    }
    for axis in axes {
        let l = axis.scaled(S::one() / axis.norm());
        let ra = a.half_extents.x * a.rotation.col(0).dot(l).abs()
            + a.half_extents.y * a.rotation.col(1).dot(l).abs()
            + a.half_extents.z * a.rotation.col(2).dot(l).abs();
        let rb = b.half_extents.x * b.rotation.col(0).dot(l).abs()
            + b.half_extents.y * b.rotation.col(1).dot(l).abs()
            + b.half_extents.z * b.rotation.col(2).dot(l).abs();
        if t.dot(l).abs() > ra + rb + margin {
            return true;
        }
    }
    false
}

/// Minimum sampled distance from segment `ab` to the primitive surface,
/// corrected by half the sample spacing so the bound is never optimistic.
fn segment_primitive_clearance<S: Real>(
    a: Vec3<S>,
    b: Vec3<S>,
    prim: &Primitive<S>,
    step: S,
) -> S {
    let len = a.dist(b);
    if len.as_f64() == 0.0 {
        return prim.signed_distance(a);
    }
    let m = subdivisions(len, step);
    let ab = b - a;
    let mut best = S::infinity();
    for i in 0..=m {
        let t = S::of(i as f64 / m as f64);
        best = best.min(prim.signed_distance(a + ab.scaled(t)));
    }
    let spacing = len / S::of(m as f64);
    best - spacing * S::of(0.5)
}

/// Conservative separation test: true only when the two solids are provably
/// more than `margin` apart. Cylinders are bounded by their axis capsule; a
/// false result may therefore be a near miss, never the other way around.
pub fn primitives_clear<S: Real>(a: &Primitive<S>, b: &Primitive<S>, margin: S, step: S) -> bool {
    use Primitive::*;
    match (a, b) {
        (Sphere(s), other) | (other, Sphere(s)) => {
            other.signed_distance(s.center) > s.radius + margin
        }
        (Box(ba), Box(bb)) => boxes_separated(ba, bb, margin),
        (Cylinder(c), Box(_)) => {
            let (p, q) = c.endpoints();
            segment_primitive_clearance(p, q, b, step) > c.radius + margin
        }
        (Box(_), Cylinder(c)) => {
            let (p, q) = c.endpoints();
            segment_primitive_clearance(p, q, a, step) > c.radius + margin
        }
        (Cylinder(ca), Cylinder(cb)) => {
            let (p1, q1) = ca.endpoints();
            let (p2, q2) = cb.endpoints();
            segment_segment_distance(p1, q1, p2, q2) > ca.radius + cb.radius + margin
        }
    }
}
