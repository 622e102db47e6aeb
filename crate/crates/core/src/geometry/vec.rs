use super::GeometryError;
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

/// Column 3-vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3<S> {
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Real> Vec3<S> {
    pub fn new(x: S, y: S, z: S) -> Self {
        Self { x, y, z }
    }

    pub fn of(x: f64, y: f64, z: f64) -> Self {
        Self::new(S::of(x), S::of(y), S::of(z))
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero())
    }

    pub fn dot(self, o: Self) -> S {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> S {
        self.dot(self)
    }

    pub fn norm(self) -> S {
        self.norm_sq().sqrt()
    }

    pub fn dist(self, o: Self) -> S {
        (self - o).norm()
    }

    pub fn scaled(self, k: S) -> Self {
        Self::new(self.x * k, self.y * k, self.z * k)
    }

    /// Unit vector in the same direction, or an error for near-zero input.
    pub fn normalized(self) -> Result<UnitVec3<S>, GeometryError> {
        UnitVec3::from_vec(self)
    }

    /// Reflection across the x-z plane.
    pub fn mirror_y(self) -> Self {
        Self::new(self.x, -self.y, self.z)
    }

    pub fn as_array(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }

    pub fn widened(self) -> [f64; 3] {
        [self.x.as_f64(), self.y.as_f64(), self.z.as_f64()]
    }
}

impl<S: Real> Add for Vec3<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Real> Sub for Vec3<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Real> Neg for Vec3<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<S: Real> Mul<S> for Vec3<S> {
    type Output = Self;
    fn mul(self, k: S) -> Self {
        self.scaled(k)
    }
}

/// Unit-length direction. Length is 1 within 1e-9 by construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec3<S>", into = "Vec3<S>")]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct UnitVec3<S: Real>(Vec3<S>);

const UNIT_TOL: f64 = 1e-9;

impl<S: Real> UnitVec3<S> {
    /// Accepts a vector already of unit length (within 1e-9).
    pub fn new(v: Vec3<S>) -> Result<Self, GeometryError> {
        let n = v.norm().as_f64();
        if (n - 1.0).abs() > UNIT_TOL {
            return Err(GeometryError::NonUnitNormal { norm: n });
        }
        Ok(Self(v))
    }

    /// Normalizes an arbitrary non-degenerate vector.
    pub fn from_vec(v: Vec3<S>) -> Result<Self, GeometryError> {
        let n = v.norm();
        if n.as_f64() < 1e-12 {
            return Err(GeometryError::NonUnitNormal { norm: n.as_f64() });
        }
        Ok(Self(v.scaled(S::one() / n)))
    }

    pub fn of(x: f64, y: f64, z: f64) -> Self {
        Self::from_vec(Vec3::of(x, y, z)).expect("nonzero direction")
    }

    pub fn as_vec(self) -> Vec3<S> {
        self.0
    }

    pub fn mirror_y(self) -> Self {
        Self(self.0.mirror_y())
    }

    pub fn neg(self) -> Self {
        Self(-self.0)
    }
}

impl<S: Real> TryFrom<Vec3<S>> for UnitVec3<S> {
    type Error = GeometryError;
    fn try_from(v: Vec3<S>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl<S: Real> From<UnitVec3<S>> for Vec3<S> {
    fn from(u: UnitVec3<S>) -> Self {
        u.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec3<f64>;

    #[test]
    fn cross_right_handed() {
        let c = V::of(0.0, 0.0, 1.0).cross(V::of(-1.0, 0.0, 1.0));
        assert_eq!(c, V::of(0.0, -1.0, 0.0));
        let xy = V::of(1.0, 0.0, 0.0).cross(V::of(0.0, 1.0, 0.0));
        assert_eq!(xy, V::of(0.0, 0.0, 1.0));
    }

    #[test]
    fn cross_of_parallel_is_zero() {
        let v = V::of(0.3, -0.2, 0.9);
        assert_eq!(v.cross(v).norm(), 0.0);
        // Doubling is exact in binary, so the parallel cross stays exactly 0.
        assert_eq!(v.cross(v.scaled(2.0)).norm(), 0.0);
    }

    #[test]
    fn dot_and_norm() {
        let v = V::of(3.0, 4.0, 12.0);
        assert_eq!(v.norm(), 13.0);
        assert_eq!(v.dot(V::of(1.0, 1.0, 1.0)), 19.0);
    }

    #[test]
    fn unit_vector_rejects_non_unit() {
        assert!(UnitVec3::new(V::of(0.0, 0.0, 1.0 + 1e-6)).is_err());
        assert!(UnitVec3::new(V::of(0.0, 0.0, 1.0)).is_ok());
        assert!(UnitVec3::<f64>::from_vec(V::zero()).is_err());
    }

    #[test]
    fn normalization() {
        let u = V::of(0.0, 3.0, 4.0).normalized().unwrap();
        assert!((u.as_vec().norm() - 1.0).abs() < 1e-12);
        assert!((u.as_vec().y - 0.6).abs() < 1e-12);
    }

    #[test]
    fn mirror_y_flips_one_axis() {
        assert_eq!(V::of(1.0, 2.0, 3.0).mirror_y(), V::of(1.0, -2.0, 3.0));
    }
}
