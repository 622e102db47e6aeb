use super::{LabeledSolid, Scene, SceneError};
use crate::geometry::{Primitive, UnitVec3, Vec3};
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Per-point segmentation label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegClass {
    /// Static carcass of the articulated target.
    Body,
    /// Movable part, by part index.
    Part(u32),
    /// Free-standing obstacle, by occluder index.
    Occluder(u32),
}

impl SegClass {
    /// Integer encoding used by the cloud file format: 0 body, 1+i part i,
    /// -1-j occluder j.
    pub fn to_code(self) -> i32 {
        match self {
            SegClass::Body => 0,
            SegClass::Part(i) => 1 + i as i32,
            SegClass::Occluder(j) => -1 - (j as i32),
        }
    }

    pub fn from_code(c: i32) -> Self {
        if c == 0 {
            SegClass::Body
        } else if c > 0 {
            SegClass::Part((c - 1) as u32)
        } else {
            SegClass::Occluder((-1 - c) as u32)
        }
    }

    /// Index into the three-way one-hot used as a network feature:
    /// movable part, body, occluder.
    pub fn class_index(self) -> usize {
        match self {
            SegClass::Part(_) => 0,
            SegClass::Body => 1,
            SegClass::Occluder(_) => 2,
        }
    }
}

/// Surface point with analytic outward normal and labels.
#[derive(Clone, Copy, Debug)]
pub struct PointSample<S: Real> {
    pub position: Vec3<S>,
    pub normal: UnitVec3<S>,
    pub seg: SegClass,
    pub handle: bool,
}

/// Fixed-size labeled point cloud in struct-of-arrays layout. All columns
/// have equal length; normals are unit by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCloud<S: Real> {
    pub points: Vec<Vec3<S>>,
    pub normals: Vec<UnitVec3<S>>,
    pub seg: Vec<SegClass>,
    pub handle: Vec<bool>,
}

impl<S: Real> LabeledCloud<S> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            points: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
            seg: Vec::with_capacity(n),
            handle: Vec::with_capacity(n),
        }
    }

    pub fn push(&mut self, s: PointSample<S>) {
        self.points.push(s.position);
        self.normals.push(s.normal);
        self.seg.push(s.seg);
        self.handle.push(s.handle);
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> PointSample<S> {
        PointSample {
            position: self.points[i],
            normal: self.normals[i],
            seg: self.seg[i],
            handle: self.handle[i],
        }
    }

    /// Indices of points on movable parts; the only points interactions may
    /// anchor to.
    pub fn part_point_indices(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| matches!(self.seg[i], SegClass::Part(_)))
            .collect()
    }

    pub fn handle_point_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.handle[i]).collect()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let n = self.points.len();
        if self.normals.len() != n || self.seg.len() != n || self.handle.len() != n {
            return Err(SceneError::InvalidScene {
                detail: "cloud column lengths differ".into(),
            });
        }
        for (i, nv) in self.normals.iter().enumerate() {
            let len = nv.as_vec().norm().as_f64();
            if (len - 1.0).abs() > 1e-6 {
                return Err(SceneError::InvalidScene {
                    detail: format!("normal {i} has length {len}"),
                });
            }
        }
        Ok(())
    }
}

pub(super) fn uniform<S: Real>(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> S {
    S::of(lo + (hi - lo) * rng.gen::<f64>())
}

/// Orthonormal pair completing `axis` to a right-handed frame.
fn orthonormal_basis<S: Real>(axis: Vec3<S>) -> (Vec3<S>, Vec3<S>) {
    let helper = if axis.x.as_f64().abs() < 0.9 {
        Vec3::of(1.0, 0.0, 0.0)
    } else {
        Vec3::of(0.0, 1.0, 0.0)
    };
    let e1 = axis.cross(helper);
    let e1 = e1.scaled(S::one() / e1.norm());
    let e2 = axis.cross(e1);
    (e1, e2)
}

/// Uniform point on the primitive surface with its outward normal.
fn sample_on_surface<S: Real>(
    prim: &Primitive<S>,
    rng: &mut ChaCha8Rng,
) -> (Vec3<S>, UnitVec3<S>) {
    match prim {
        Primitive::Box(b) => {
            let h = b.half_extents;
            let (hx, hy, hz) = (h.x.as_f64(), h.y.as_f64(), h.z.as_f64());
            let areas = [hy * hz, hy * hz, hx * hz, hx * hz, hx * hy, hx * hy];
            let total: f64 = areas.iter().sum();
            let mut pick = rng.gen::<f64>() * total;
            let mut face = 5;
            for (i, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = i;
                    break;
                }
                pick -= a;
            }
            let u: S = uniform(rng, -1.0, 1.0);
            let v: S = uniform(rng, -1.0, 1.0);
            let (local, normal_local) = match face {
                0 => (Vec3::new(h.x, h.y * u, h.z * v), Vec3::of(1.0, 0.0, 0.0)),
                1 => (Vec3::new(-h.x, h.y * u, h.z * v), Vec3::of(-1.0, 0.0, 0.0)),
                2 => (Vec3::new(h.x * u, h.y, h.z * v), Vec3::of(0.0, 1.0, 0.0)),
                3 => (Vec3::new(h.x * u, -h.y, h.z * v), Vec3::of(0.0, -1.0, 0.0)),
                4 => (Vec3::new(h.x * u, h.y * v, h.z), Vec3::of(0.0, 0.0, 1.0)),
                _ => (Vec3::new(h.x * u, h.y * v, -h.z), Vec3::of(0.0, 0.0, -1.0)),
            };
            let p = b.rotation.mul_vec(local) + b.center;
            let n = b.rotation.mul_vec(normal_local);
            (p, UnitVec3::from_vec(n).expect("rotated unit normal"))
        }
        Primitive::Sphere(s) => {
            let z: f64 = -1.0 + 2.0 * rng.gen::<f64>();
            let phi: f64 = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            let r_xy = (1.0 - z * z).max(0.0).sqrt();
            let dir = Vec3::of(r_xy * phi.cos(), r_xy * phi.sin(), z);
            (
                s.center + dir.scaled(s.radius),
                UnitVec3::from_vec(dir).expect("unit direction"),
            )
        }
        Primitive::Cylinder(c) => {
            let r = c.radius.as_f64();
            let h = c.half_length.as_f64();
            let lateral = 2.0 * std::f64::consts::PI * r * 2.0 * h;
            let cap = std::f64::consts::PI * r * r;
            let total = lateral + 2.0 * cap;
            let pick = rng.gen::<f64>() * total;
            let axis = c.axis.as_vec();
            let (e1, e2) = orthonormal_basis(axis);
            let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
            let radial = e1.scaled(S::of(theta.cos())) + e2.scaled(S::of(theta.sin()));
            if pick < lateral {
                let z: S = uniform(rng, -h, h);
                let p = c.center + axis.scaled(z) + radial.scaled(c.radius);
                (p, UnitVec3::from_vec(radial).expect("radial normal"))
            } else {
                let sign = if pick < lateral + cap { 1.0 } else { -1.0 };
                let rr = S::of(r * rng.gen::<f64>().sqrt());
                let p = c.center + axis.scaled(S::of(sign * h)) + radial.scaled(rr);
                let n = axis.scaled(S::of(sign));
                (p, UnitVec3::from_vec(n).expect("cap normal"))
            }
        }
    }
}

/// Greedy farthest-point selection. Returns `k` indices in pick order,
/// starting from `start`; max-distance ties resolve to the lowest index.
pub fn furthest_point_indices<S: Real>(points: &[Vec3<S>], k: usize, start: usize) -> Vec<usize> {
    let n = points.len();
    let k = k.min(n);
    if k == 0 {
        return Vec::new();
    }
    let mut picks = Vec::with_capacity(k);
    let mut min_d: Vec<S> = points.iter().map(|p| p.dist(points[start])).collect();
    picks.push(start);
    while picks.len() < k {
        let mut best = 0;
        let mut best_d = S::neg_infinity();
        for (i, d) in min_d.iter().enumerate() {
            if *d > best_d {
                best_d = *d;
                best = i;
            }
        }
        picks.push(best);
        for (i, d) in min_d.iter_mut().enumerate() {
            let nd = points[i].dist(points[best]);
            if nd < *d {
                *d = nd;
            }
        }
    }
    picks
}

fn draw_samples<S: Real>(
    solids: &[LabeledSolid<S>],
    n_raw: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<PointSample<S>>, SceneError> {
    let areas: Vec<f64> = solids.iter().map(|s| s.solid.surface_area().as_f64()).collect();
    let total: f64 = areas.iter().sum();
    if total <= 0.0 || solids.is_empty() {
        return Err(SceneError::InvalidScene {
            detail: "scene has no surface to sample".into(),
        });
    }
    let mut out = Vec::with_capacity(n_raw);
    let mut attempts = 0usize;
    let cap = n_raw.saturating_mul(50).max(1000);
    while out.len() < n_raw {
        attempts += 1;
        if attempts > cap {
            return Err(SceneError::InvalidScene {
                detail: "surface sampling rejected too many interior points".into(),
            });
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut idx = solids.len() - 1;
        for (i, a) in areas.iter().enumerate() {
            if pick < *a {
                idx = i;
                break;
            }
            pick -= a;
        }
        let (p, n) = sample_on_surface(&solids[idx].solid, rng);
        // Keep only points on the visible union boundary: drop those strictly
        // inside some other solid (e.g. the embedded back of a handle).
        let buried = solids
            .iter()
            .enumerate()
            .any(|(j, s)| j != idx && s.solid.signed_distance(p).as_f64() < -1e-7);
        if buried {
            continue;
        }
        out.push(PointSample {
            position: p,
            normal: n,
            seg: solids[idx].seg,
            handle: solids[idx].is_handle,
        });
    }
    Ok(out)
}

fn downsample<S: Real>(samples: Vec<PointSample<S>>, n_out: usize) -> LabeledCloud<S> {
    let mut cloud = LabeledCloud::with_capacity(n_out);
    if samples.len() <= n_out {
        for s in samples {
            cloud.push(s);
        }
        return cloud;
    }
    let pts: Vec<Vec3<S>> = samples.iter().map(|s| s.position).collect();
    let mut picks = furthest_point_indices(&pts, n_out, 0);
    picks.sort_unstable();
    for i in picks {
        cloud.push(samples[i]);
    }
    cloud
}

/// Area-weighted surface sampling of every solid in the scene, then
/// farthest-point downsampling to exactly `n_out` points. Deterministic for
/// a given seed.
pub fn sample_cloud<S: Real>(
    scene: &Scene<S>,
    n_raw: usize,
    n_out: usize,
    seed: u64,
) -> Result<LabeledCloud<S>, SceneError> {
    if n_out > n_raw || n_out == 0 {
        return Err(SceneError::InvalidScene {
            detail: format!("cloud sizes must satisfy 0 < n_out <= n_raw, got {n_out}/{n_raw}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = draw_samples(&scene.solids(), n_raw, &mut rng)?;
    Ok(downsample(samples, n_out))
}

/// Extends `base` with points sampled on one newly added occluder, leaving
/// every existing point and its index unchanged.
pub fn augmented_cloud<S: Real>(
    base: &LabeledCloud<S>,
    scene: &Scene<S>,
    occluder_index: usize,
    n_raw_extra: usize,
    n_extra: usize,
    seed: u64,
) -> Result<LabeledCloud<S>, SceneError> {
    if n_extra > n_raw_extra || n_extra == 0 {
        return Err(SceneError::InvalidScene {
            detail: "augmented cloud sizes must satisfy 0 < n_extra <= n_raw_extra".into(),
        });
    }
    let occ = &scene.occluders[occluder_index];
    let solid = LabeledSolid {
        seg: SegClass::Occluder(occluder_index as u32),
        is_handle: false,
        solid: occ.world(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = draw_samples(&[solid], n_raw_extra, &mut rng)?;
    let extra = downsample(samples, n_extra);
    let mut out = base.clone();
    for i in 0..extra.len() {
        out.push(extra.get(i));
    }
    Ok(out)
}
