use super::{GeometryError, UnitVec3, Vec3};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

/// Row-major 3x3 matrix. Constructors that promise a rotation validate
/// orthonormality and determinant +1 within 1e-9.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat3<S> {
    pub m: [[S; 3]; 3],
}

const ROT_TOL: f64 = 1e-9;

impl<S: Real> Mat3<S> {
    pub fn identity() -> Self {
        let o = S::one();
        let z = S::zero();
        Self {
            m: [[o, z, z], [z, o, z], [z, z, o]],
        }
    }

    /// Rodrigues rotation about a unit axis.
    pub fn from_axis_angle(axis: UnitVec3<S>, angle: S) -> Self {
        let a = axis.as_vec();
        let (s, c) = (angle.sin(), angle.cos());
        let t = S::one() - c;
        let (x, y, z) = (a.x, a.y, a.z);
        Self {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3<S>) -> Vec3<S> {
        let r = &self.m;
        Vec3::new(
            r[0][0] * v.x + r[0][1] * v.y + r[0][2] * v.z,
            r[1][0] * v.x + r[1][1] * v.y + r[1][2] * v.z,
            r[2][0] * v.x + r[2][1] * v.y + r[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Self) -> Self {
        let mut m = [[S::zero(); 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).fold(S::zero(), |acc, k| acc + self.m[i][k] * o.m[k][j]);
            }
        }
        Self { m }
    }

    pub fn transpose(&self) -> Self {
        let r = &self.m;
        Self {
            m: [
                [r[0][0], r[1][0], r[2][0]],
                [r[0][1], r[1][1], r[2][1]],
                [r[0][2], r[1][2], r[2][2]],
            ],
        }
    }

    pub fn det(&self) -> S {
        let r = &self.m;
        r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
            - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
            + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
    }

    pub fn col(&self, j: usize) -> Vec3<S> {
        Vec3::new(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn row(&self, i: usize) -> Vec3<S> {
        Vec3::new(self.m[i][0], self.m[i][1], self.m[i][2])
    }

    fn rotation_defect(&self) -> f64 {
        let id = self.mul_mat(&self.transpose());
        let mut worst = 0.0f64;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((id.m[i][j].as_f64() - want).abs());
            }
        }
        worst.max((self.det().as_f64() - 1.0).abs())
    }

    pub fn validated_rotation(self) -> Result<Self, GeometryError> {
        let d = self.rotation_defect();
        if d > ROT_TOL {
            return Err(GeometryError::DegenerateTransform {
                detail: format!("orthonormality defect {d:.3e}"),
            });
        }
        Ok(self)
    }

    /// Conjugation by diag(1,-1,1); maps a rotation to the rotation of the
    /// mirrored frame.
    pub fn mirror_y(&self) -> Self {
        let mut m = self.m;
        m[0][1] = -m[0][1];
        m[1][0] = -m[1][0];
        m[1][2] = -m[1][2];
        m[2][1] = -m[2][1];
        Self { m }
    }
}

/// Rotation followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform<S> {
    pub rotation: Mat3<S>,
    pub translation: Vec3<S>,
}

impl<S: Real> RigidTransform<S> {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zero(),
        }
    }

    pub fn new(rotation: Mat3<S>, translation: Vec3<S>) -> Result<Self, GeometryError> {
        Ok(Self {
            rotation: rotation.validated_rotation()?,
            translation,
        })
    }

    pub fn from_parts(rotation: Mat3<S>, translation: Vec3<S>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn translation_of(t: Vec3<S>) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: t,
        }
    }

    pub fn apply(&self, p: Vec3<S>) -> Vec3<S> {
        self.rotation.mul_vec(p) + self.translation
    }

    pub fn rotate(&self, v: Vec3<S>) -> Vec3<S> {
        self.rotation.mul_vec(v)
    }

    /// self after `first`: `(self.compose(first)).apply(p) == self.apply(first.apply(p))`.
    pub fn compose(&self, first: &Self) -> Self {
        Self {
            rotation: self.rotation.mul_mat(&first.rotation),
            translation: self.rotation.mul_vec(first.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -rt.mul_vec(self.translation),
        }
    }
}
