use super::cloud::uniform;
use super::{
    ArticulatedTarget, Joint, JointKind, LabeledCloud, Occluder, Part, Scene, SceneError,
};
use crate::geometry::{
    primitives_clear, segment_point_distance, Cylinder, Mat3, OrientedBox, Primitive,
    RigidTransform, Sphere, UnitVec3, Vec3,
};
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Occluder shape families. The first three are the training pool; the
/// other three use parameter ranges disjoint from the training ranges and
/// are reserved for the novel-shape test split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OccluderFamily {
    BoxMid,
    CylinderMid,
    SphereMid,
    CylinderTall,
    BoxFlat,
    SphereLarge,
}

pub const TRAIN_FAMILIES: [OccluderFamily; 3] = [
    OccluderFamily::BoxMid,
    OccluderFamily::CylinderMid,
    OccluderFamily::SphereMid,
];

pub const NOVEL_FAMILIES: [OccluderFamily; 3] = [
    OccluderFamily::CylinderTall,
    OccluderFamily::BoxFlat,
    OccluderFamily::SphereLarge,
];

impl OccluderFamily {
    /// Shape parameter ranges in meters, as (lo, hi) pairs. Boxes use three
    /// half-extent ranges, cylinders (radius, half-length), spheres one
    /// radius range.
    pub fn param_ranges(self) -> Vec<(f64, f64)> {
        match self {
            OccluderFamily::BoxMid => vec![(0.035, 0.12), (0.035, 0.12), (0.035, 0.12)],
            OccluderFamily::CylinderMid => vec![(0.04, 0.10), (0.05, 0.15)],
            OccluderFamily::SphereMid => vec![(0.04, 0.12)],
            OccluderFamily::CylinderTall => vec![(0.025, 0.03), (0.16, 0.20)],
            OccluderFamily::BoxFlat => vec![(0.13, 0.20), (0.13, 0.20), (0.025, 0.03)],
            OccluderFamily::SphereLarge => vec![(0.13, 0.18)],
        }
    }

    /// Primitive in its local frame (resting on z = 0 once translated up by
    /// the returned height) plus that resting height.
    fn sample_local<S: Real>(self, rng: &mut ChaCha8Rng) -> (Primitive<S>, S) {
        let r = self.param_ranges();
        match self {
            OccluderFamily::BoxMid | OccluderFamily::BoxFlat => {
                let hx: S = uniform(rng, r[0].0, r[0].1);
                let hy: S = uniform(rng, r[1].0, r[1].1);
                let hz: S = uniform(rng, r[2].0, r[2].1);
                let b = OrientedBox::axis_aligned(Vec3::zero(), Vec3::new(hx, hy, hz))
                    .expect("positive extents");
                (Primitive::Box(b), hz)
            }
            OccluderFamily::CylinderMid | OccluderFamily::CylinderTall => {
                let radius: S = uniform(rng, r[0].0, r[0].1);
                let half: S = uniform(rng, r[1].0, r[1].1);
                let c = Cylinder::new(Vec3::zero(), UnitVec3::of(0.0, 0.0, 1.0), half, radius)
                    .expect("positive extents");
                (Primitive::Cylinder(c), half)
            }
            OccluderFamily::SphereMid | OccluderFamily::SphereLarge => {
                let radius: S = uniform(rng, r[0].0, r[0].1);
                let s = Sphere::new(Vec3::zero(), radius).expect("positive radius");
                (Primitive::Sphere(s), radius)
            }
        }
    }
}

/// Axis-aligned floor rectangle occluder centers are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct Region2<S: Real> {
    pub x: [S; 2],
    pub y: [S; 2],
}

impl<S: Real> Region2<S> {
    /// Default strip between the cabinet front and the robot arc.
    pub fn front_strip() -> Self {
        Self {
            x: [S::of(0.08), S::of(0.55)],
            y: [S::of(-0.55), S::of(0.55)],
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (S, S) {
        (
            uniform(rng, self.x[0].as_f64(), self.x[1].as_f64()),
            uniform(rng, self.y[0].as_f64(), self.y[1].as_f64()),
        )
    }

    /// True when (x, y) lies outside the central 60%-scaled core, i.e. in
    /// the peripheral band of the region.
    fn in_periphery(&self, x: S, y: S) -> bool {
        let cx = (self.x[0] + self.x[1]).as_f64() * 0.5;
        let cy = (self.y[0] + self.y[1]).as_f64() * 0.5;
        let hx = (self.x[1] - self.x[0]).as_f64() * 0.5;
        let hy = (self.y[1] - self.y[0]).as_f64() * 0.5;
        (x.as_f64() - cx).abs() > 0.6 * hx || (y.as_f64() - cy).abs() > 0.6 * hy
    }
}

/// Recipe for one procedural scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct SceneSpec<S: Real> {
    pub id: u64,
    pub seed: u64,
    pub num_occluders: u32,
    pub pool: Vec<OccluderFamily>,
    pub region: Region2<S>,
    pub max_retries: u32,
}

impl<S: Real> SceneSpec<S> {
    pub fn new(id: u64, seed: u64, num_occluders: u32, pool: Vec<OccluderFamily>) -> Self {
        Self {
            id,
            seed,
            num_occluders,
            pool,
            region: Region2::front_strip(),
            max_retries: 1000,
        }
    }
}

const PANEL_THICKNESS: f64 = 0.02;
const PANEL_GAP: f64 = 0.008;
const PLACE_MARGIN: f64 = 0.02;
const ROBOT_CLEARANCE: f64 = 0.05;
const CLEAR_STEP: f64 = 0.005;

/// Default retry budget for [`augment_positive`].
pub const DEFAULT_AUGMENT_BUDGET: u32 = 100;

fn drawer_part<S: Real>(
    rng: &mut ChaCha8Rng,
    width: f64,
    z_lo: f64,
    height: f64,
) -> Part<S> {
    let t = PANEL_THICKNESS;
    let zc = z_lo + height / 2.0;
    let shape = OrientedBox::axis_aligned(
        Vec3::of(-t / 2.0, 0.0, zc),
        Vec3::of(t / 2.0, width / 2.0, height / 2.0),
    )
    .expect("positive panel extents");
    let handle = OrientedBox::axis_aligned(Vec3::of(0.005, 0.0, zc), Vec3::of(0.01, 0.02, 0.01))
        .expect("positive handle extents");
    Part {
        shape,
        handle: Some(handle),
        joint: Joint {
            kind: JointKind::Prismatic,
            axis: UnitVec3::of(1.0, 0.0, 0.0),
            anchor: Vec3::of(0.0, 0.0, zc),
            range: [S::zero(), S::of(0.25)],
            state: uniform(rng, 0.08, 0.16),
        },
    }
}

fn door_part<S: Real>(
    rng: &mut ChaCha8Rng,
    yc: f64,
    width: f64,
    z_lo: f64,
    height: f64,
    hinge_left: bool,
) -> Part<S> {
    let t = PANEL_THICKNESS;
    let zc = z_lo + height / 2.0;
    let shape = OrientedBox::axis_aligned(
        Vec3::of(-t / 2.0, yc, zc),
        Vec3::of(t / 2.0, width / 2.0, height / 2.0),
    )
    .expect("positive panel extents");
    let handle = OrientedBox::axis_aligned(Vec3::of(0.005, yc, zc), Vec3::of(0.01, 0.01, 0.02))
        .expect("positive handle extents");
    let hinge_y = if hinge_left { yc - width / 2.0 } else { yc + width / 2.0 };
    // Axis sign keeps positive joint values swinging the free edge outward
    // (toward +x) for either hinge side.
    let axis = if hinge_left {
        UnitVec3::of(0.0, 0.0, -1.0)
    } else {
        UnitVec3::of(0.0, 0.0, 1.0)
    };
    Part {
        shape,
        handle: Some(handle),
        joint: Joint {
            kind: JointKind::Revolute,
            axis,
            anchor: Vec3::of(0.0, hinge_y, zc),
            range: [S::zero(), S::of(std::f64::consts::FRAC_PI_2)],
            state: uniform(rng, 0.25, 0.7),
        },
    }
}

fn build_target<S: Real>(rng: &mut ChaCha8Rng) -> ArticulatedTarget<S> {
    let w: f64 = uniform::<f64>(rng, 0.6, 0.9);
    let h: f64 = uniform::<f64>(rng, 0.7, 1.1);
    let d: f64 = uniform::<f64>(rng, 0.3, 0.45);
    let n_drawers: u32 = rng.gen_range(1..=3);
    let n_doors: u32 = rng.gen_range(0..=2);

    let t = PANEL_THICKNESS;
    let g = PANEL_GAP;
    let body = OrientedBox::axis_aligned(
        Vec3::of(-(d + t) / 2.0, 0.0, h / 2.0),
        Vec3::of((d - t) / 2.0, w / 2.0, h / 2.0),
    )
    .expect("positive body extents");

    let door_top = if n_doors > 0 { 0.5 * h } else { 0.0 };
    let mut parts: Vec<Part<S>> = Vec::new();

    let drawer_band = h - door_top;
    let hd = (drawer_band - (n_drawers as f64 + 1.0) * g) / n_drawers as f64;
    for i in 0..n_drawers {
        let z_lo = door_top + g + i as f64 * (hd + g);
        parts.push(drawer_part(rng, w - 2.0 * g, z_lo, hd));
    }

    if n_doors == 1 {
        parts.push(door_part(rng, 0.0, w - 2.0 * g, g, door_top - 2.0 * g, true));
    } else if n_doors == 2 {
        let wd = (w - 3.0 * g) / 2.0;
        let yc = (w - g) / 4.0;
        parts.push(door_part(rng, -yc, wd, g, door_top - 2.0 * g, true));
        parts.push(door_part(rng, yc, wd, g, door_top - 2.0 * g, false));
    }

    ArticulatedTarget {
        body: vec![body],
        parts,
    }
}

fn yaw_pose<S: Real>(rng: &mut ChaCha8Rng, x: S, y: S, z: S) -> RigidTransform<S> {
    let yaw: S = uniform(rng, 0.0, 2.0 * std::f64::consts::PI);
    RigidTransform::from_parts(
        Mat3::from_axis_angle(UnitVec3::of(0.0, 0.0, 1.0), yaw),
        Vec3::new(x, y, z),
    )
}

/// True when the candidate world solid keeps the placement margins to the
/// target, previously placed occluders, and the robot.
fn placement_ok<S: Real>(world: &Primitive<S>, scene: &Scene<S>) -> bool {
    let margin = S::of(PLACE_MARGIN);
    let step = S::of(CLEAR_STEP);
    for s in scene.solids() {
        if !primitives_clear(world, &s.solid, margin, step) {
            return false;
        }
    }
    world.signed_distance(scene.robot).as_f64() > ROBOT_CLEARANCE
}

/// Builds the articulated target, places the robot on its floor arc, and
/// rejection-samples occluder placements. Deterministic for a given spec.
pub fn generate_scene<S: Real>(spec: &SceneSpec<S>) -> Result<Scene<S>, SceneError> {
    if spec.pool.is_empty() {
        return Err(SceneError::InvalidScene {
            detail: "occluder family pool is empty".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let target = build_target(&mut rng);

    let r: f64 = uniform::<f64>(&mut rng, 0.6, 1.0);
    let phi: f64 = uniform::<f64>(
        &mut rng,
        -std::f64::consts::FRAC_PI_3,
        std::f64::consts::FRAC_PI_3,
    );
    let robot = Vec3::of(r * phi.cos(), r * phi.sin(), 0.0);

    let mut scene = Scene {
        id: spec.id,
        rng_seed: spec.seed,
        robot,
        target,
        occluders: Vec::new(),
    };

    for _ in 0..spec.num_occluders {
        let mut placed = false;
        for _attempt in 0..spec.max_retries {
            let family = spec.pool[rng.gen_range(0..spec.pool.len())];
            let (local, rest_height) = family.sample_local::<S>(&mut rng);
            let (x, y) = spec.region.sample(&mut rng);
            let pose = yaw_pose(&mut rng, x, y, rest_height);
            let candidate = Occluder {
                primitive: local,
                pose,
                family,
            };
            if placement_ok(&candidate.world(), &scene) {
                scene.occluders.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SceneError::PlacementFailure {
                attempts: spec.max_retries,
            });
        }
    }
    Ok(scene)
}

/// Adds exactly one occluder in the peripheral band of `region`, away from
/// the robot-to-target corridor, such that `label_of` is unchanged. The
/// label check is what guarantees validity; the band and corridor rules
/// only bias the search.
pub fn augment_positive<S: Real>(
    scene: &Scene<S>,
    target_point: Vec3<S>,
    pool: &[OccluderFamily],
    region: &Region2<S>,
    budget: u32,
    seed: u64,
    label_of: impl Fn(&Scene<S>) -> bool,
) -> Result<(Scene<S>, usize), SceneError> {
    if pool.is_empty() {
        return Err(SceneError::InvalidScene {
            detail: "occluder family pool is empty".into(),
        });
    }
    let base_label = label_of(scene);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        let family = pool[rng.gen_range(0..pool.len())];
        let (local, rest_height) = family.sample_local::<S>(&mut rng);
        let (x, y) = region.sample(&mut rng);
        if !region.in_periphery(x, y) {
            continue;
        }
        let pose = yaw_pose(&mut rng, x, y, rest_height);
        let candidate = Occluder {
            primitive: local,
            pose,
            family,
        };
        let world = candidate.world();
        // Keep the new obstacle lateral to the approach corridor.
        let floor = |p: Vec3<S>| Vec3::new(p.x, p.y, S::zero());
        let corridor = segment_point_distance(
            floor(scene.robot),
            floor(target_point),
            floor(world.center()),
        );
        if corridor < world.bounding_radius() + S::of(0.10) {
            continue;
        }
        if !placement_ok(&world, scene) {
            continue;
        }
        let mut candidate_scene = scene.clone();
        candidate_scene.occluders.push(candidate);
        if label_of(&candidate_scene) == base_label {
            return Ok((candidate_scene, scene.occluders.len()));
        }
    }
    Err(SceneError::AugmentFailure { budget })
}

/// Picks a part point other than the anchor, uniformly among those at least
/// `d_min` away; falls back to any other part point when none qualify.
pub fn sample_negative_point<S: Real>(
    cloud: &LabeledCloud<S>,
    anchor_index: usize,
    d_min: S,
    seed: u64,
) -> Result<usize, SceneError> {
    let anchor = cloud.points[anchor_index];
    let part_points = cloud.part_point_indices();
    let far: Vec<usize> = part_points
        .iter()
        .copied()
        .filter(|&i| i != anchor_index && cloud.points[i].dist(anchor) >= d_min)
        .collect();
    let candidates = if far.is_empty() {
        part_points
            .into_iter()
            .filter(|&i| i != anchor_index)
            .collect::<Vec<_>>()
    } else {
        far
    };
    if candidates.is_empty() {
        return Err(SceneError::NoCandidatePoints);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(candidates[rng.gen_range(0..candidates.len())])
}
