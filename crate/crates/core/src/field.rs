//! Occlusion field: at each scene point p the cross product of the offsets
//! to the robot position R and the manipulation point T. The magnitude is
//! twice the area of the triangle (p, R, T), so it vanishes exactly on the
//! line through R and T; small values flag geometry near the interaction
//! corridor.

use crate::geometry::Vec3;
use crate::scalar::Real;
use crate::scene::{LabeledCloud, SegClass};
use std::io::Write;

/// (p - robot) x (p - target).
pub fn field_value<S: Real>(p: Vec3<S>, robot: Vec3<S>, target: Vec3<S>) -> Vec3<S> {
    (p - robot).cross(p - target)
}

/// Field vector of one cloud point, tagged with its origin.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSample<S> {
    pub point_index: usize,
    pub value: Vec3<S>,
    pub magnitude: S,
}

/// The k candidate points with the smallest field magnitude, ascending;
/// magnitude ties resolve to the lower point index.
#[derive(Clone, Debug, PartialEq)]
pub struct SignificantSet<S> {
    pub k: usize,
    pub samples: Vec<FieldSample<S>>,
}

fn select_by<S: Real>(
    cloud: &LabeledCloud<S>,
    robot: Vec3<S>,
    target: Vec3<S>,
    k: usize,
    keep: impl Fn(usize) -> bool,
) -> SignificantSet<S> {
    let mut samples: Vec<FieldSample<S>> = (0..cloud.len())
        .filter(|&i| keep(i))
        .map(|i| {
            let value = field_value(cloud.points[i], robot, target);
            FieldSample {
                point_index: i,
                value,
                magnitude: value.norm(),
            }
        })
        .collect();
    samples.sort_by(|a, b| {
        a.magnitude
            .as_f64()
            .total_cmp(&b.magnitude.as_f64())
            .then(a.point_index.cmp(&b.point_index))
    });
    samples.truncate(k);
    SignificantSet { k, samples }
}

/// Selects the k smallest-magnitude field samples among occluder and body
/// points; points on movable parts participate only when
/// `include_part_points` is set.
pub fn select_significant<S: Real>(
    cloud: &LabeledCloud<S>,
    robot: Vec3<S>,
    target: Vec3<S>,
    k: usize,
    include_part_points: bool,
) -> SignificantSet<S> {
    select_by(cloud, robot, target, k, |i| {
        include_part_points || !matches!(cloud.seg[i], SegClass::Part(_))
    })
}

/// Candidate set used by the model forward pass: occluders, the body, and
/// every part except the one being manipulated. The manipulated part's own
/// points would otherwise dominate the smallest magnitudes.
pub fn select_significant_for_part<S: Real>(
    cloud: &LabeledCloud<S>,
    robot: Vec3<S>,
    target: Vec3<S>,
    k: usize,
    manipulated_part: u32,
) -> SignificantSet<S> {
    select_by(cloud, robot, target, k, |i| {
        cloud.seg[i] != SegClass::Part(manipulated_part)
    })
}

/// One CSV row per cloud point: index, field components, magnitude, and
/// whether the point made the significant set.
pub fn write_field_csv<S: Real, W: Write>(
    out: &mut W,
    cloud: &LabeledCloud<S>,
    robot: Vec3<S>,
    target: Vec3<S>,
    set: &SignificantSet<S>,
) -> std::io::Result<()> {
    let mut selected = vec![false; cloud.len()];
    for s in &set.samples {
        selected[s.point_index] = true;
    }
    writeln!(out, "index,f1,f2,f3,magnitude,selected")?;
    for i in 0..cloud.len() {
        let v = field_value(cloud.points[i], robot, target);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            i,
            v.x.as_f64(),
            v.y.as_f64(),
            v.z.as_f64(),
            v.norm().as_f64(),
            u8::from(selected[i])
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Mat3, UnitVec3};
    use crate::scene::PointSample;

    type V = Vec3<f64>;

    fn cloud_of(points: &[(f64, f64, f64, SegClass)]) -> LabeledCloud<f64> {
        let mut c = LabeledCloud::with_capacity(points.len());
        for &(x, y, z, seg) in points {
            c.push(PointSample {
                position: V::of(x, y, z),
                normal: UnitVec3::of(0.0, 0.0, 1.0),
                seg,
                handle: false,
            });
        }
        c
    }

    #[test]
    fn vanishes_at_robot_target_and_on_their_line() {
        let r = V::of(0.8, -0.1, 0.0);
        let t = V::of(0.0, 0.2, 0.5);
        assert_eq!(field_value(r, r, t).norm(), 0.0);
        assert_eq!(field_value(t, r, t).norm(), 0.0);
        let mid = r + (t - r).scaled(0.37);
        assert!(field_value(mid, r, t).norm() < 1e-12);
        let beyond = r + (t - r).scaled(1.8);
        assert!(field_value(beyond, r, t).norm() < 1e-12);
    }

    #[test]
    fn magnitude_is_twice_triangle_area() {
        // Triangle with legs 3 and 4 at a right angle: area 6.
        let p = V::zero();
        let r = V::of(3.0, 0.0, 0.0);
        let t = V::of(0.0, 4.0, 0.0);
        assert!((field_value(p, r, t).norm() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn rigid_equivariance() {
        let rot = Mat3::from_axis_angle(UnitVec3::of(0.3, -0.5, 0.8), 1.1);
        let shift = V::of(0.4, -0.2, 0.9);
        let (p, r, t) = (V::of(0.1, 0.9, 0.2), V::of(0.7, 0.0, 0.0), V::of(0.0, 0.1, 0.6));
        let before = field_value(p, r, t);
        let apply = |v: V| rot.mul_vec(v) + shift;
        let after = field_value(apply(p), apply(r), apply(t));
        assert!(after.dist(rot.mul_vec(before)) < 1e-12);
    }

    #[test]
    fn near_target_magnitude_bound() {
        let r = V::of(0.9, 0.1, 0.0);
        let t = V::of(0.0, 0.0, 0.55);
        let base = (t - r).norm();
        for (eps, dir) in [
            (1e-3, V::of(1.0, 0.0, 0.0)),
            (1e-2, V::of(0.0, -0.8, 0.6)),
            (0.1, V::of(0.57, 0.57, 0.59)),
        ] {
            let u = dir.scaled(1.0 / dir.norm());
            let p = t + u.scaled(eps);
            let mag = field_value(p, r, t).norm();
            assert!(mag <= eps * base + eps * eps + 1e-12, "eps {eps}: {mag}");
        }
    }

    #[test]
    fn selection_orders_by_magnitude_then_index() {
        let r = V::of(1.0, 0.0, 0.0);
        let t = V::of(-1.0, 0.0, 0.0);
        // Two occluder points mirrored across the corridor line share a
        // magnitude; the tie must resolve to the lower index.
        let cloud = cloud_of(&[
            (0.0, 0.5, 0.0, SegClass::Occluder(0)),
            (0.0, -0.5, 0.0, SegClass::Occluder(0)),
            (0.0, 0.1, 0.0, SegClass::Body),
            (0.0, 2.0, 0.0, SegClass::Occluder(0)),
        ]);
        let set = select_significant(&cloud, r, t, 2, false);
        assert_eq!(set.samples.len(), 2);
        assert_eq!(set.samples[0].point_index, 2);
        assert_eq!(set.samples[1].point_index, 0);
        assert!(set.samples[0].magnitude <= set.samples[1].magnitude);
        let full = select_significant(&cloud, r, t, 10, false);
        assert_eq!(full.samples.len(), 4);
        assert_eq!(full.samples[3].point_index, 3);
    }

    #[test]
    fn part_points_excluded_unless_requested() {
        let r = V::of(1.0, 0.0, 0.0);
        let t = V::of(-1.0, 0.0, 0.0);
        let cloud = cloud_of(&[
            (0.0, 0.01, 0.0, SegClass::Part(0)),
            (0.0, 0.5, 0.0, SegClass::Body),
            (0.0, 0.6, 0.0, SegClass::Part(1)),
        ]);
        let without = select_significant(&cloud, r, t, 3, false);
        assert_eq!(
            without.samples.iter().map(|s| s.point_index).collect::<Vec<_>>(),
            vec![1]
        );
        let with = select_significant(&cloud, r, t, 3, true);
        assert_eq!(with.samples.len(), 3);
        assert_eq!(with.samples[0].point_index, 0);
        // Per-part exclusion keeps the other part's points.
        let for_part = select_significant_for_part(&cloud, r, t, 3, 0);
        assert_eq!(
            for_part.samples.iter().map(|s| s.point_index).collect::<Vec<_>>(),
            vec![1, 2]
        );
    }

    #[test]
    fn adding_larger_magnitude_points_keeps_selection() {
        let r = V::of(1.0, 0.0, 0.0);
        let t = V::of(-1.0, 0.0, 0.0);
        let mut rows = vec![
            (0.0, 0.2, 0.0, SegClass::Occluder(0)),
            (0.1, 0.3, 0.1, SegClass::Occluder(0)),
            (0.0, 0.15, 0.05, SegClass::Body),
        ];
        let before = select_significant(&cloud_of(&rows), r, t, 2, false);
        let kth = before.samples.last().unwrap().magnitude;
        // Append points strictly above the k-th magnitude; selection by
        // index and value must be unchanged.
        rows.push((0.0, 5.0, 0.0, SegClass::Occluder(1)));
        rows.push((2.0, -4.0, 1.0, SegClass::Occluder(1)));
        let after = select_significant(&cloud_of(&rows), r, t, 2, false);
        assert!(after.samples.iter().all(|s| s.magnitude <= kth || s.point_index < 3));
        assert_eq!(before.samples, after.samples);
    }

    #[test]
    fn csv_export_lists_every_point() {
        let r = V::of(1.0, 0.0, 0.0);
        let t = V::of(-1.0, 0.0, 0.0);
        let cloud = cloud_of(&[
            (0.0, 0.5, 0.0, SegClass::Occluder(0)),
            (0.0, -0.25, 0.0, SegClass::Body),
        ]);
        let set = select_significant(&cloud, r, t, 1, false);
        let mut buf = Vec::new();
        write_field_csv(&mut buf, &cloud, r, t, &set).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "index,f1,f2,f3,magnitude,selected");
        assert!(lines[1].ends_with(",0"));
        assert!(lines[2].ends_with(",1"));
    }
}
