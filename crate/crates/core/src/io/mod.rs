//! On-disk formats: binary little-endian PLY for labeled clouds and score
//! heatmaps, versioned JSON envelopes for scenes, and the shared
//! little-endian primitive codec used by the record and checkpoint files.

use crate::geometry::{UnitVec3, Vec3};
use crate::scalar::Real;
use crate::scene::{LabeledCloud, Scene, SegClass};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const SCENE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt data: {detail}")]
    CorruptData { detail: String },
    #[error("format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed file: {detail}")]
    FormatError { detail: String },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn corrupt(detail: impl Into<String>) -> IoError {
    IoError::CorruptData {
        detail: detail.into(),
    }
}

// Little-endian primitive codec shared by records.bin and checkpoints.

pub(crate) fn put_u8(w: &mut impl Write, v: u8) -> Result<(), IoError> {
    w.write_all(&[v])?;
    Ok(())
}

pub(crate) fn put_u16(w: &mut impl Write, v: u16) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_u32(w: &mut impl Write, v: u32) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_u64(w: &mut impl Write, v: u64) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_i32(w: &mut impl Write, v: i32) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub(crate) fn put_f64(w: &mut impl Write, v: f64) -> Result<(), IoError> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N], IoError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| corrupt("unexpected end of file"))?;
    Ok(buf)
}

pub(crate) fn get_u8(r: &mut impl Read) -> Result<u8, IoError> {
    Ok(take::<1>(r)?[0])
}

pub(crate) fn get_u16(r: &mut impl Read) -> Result<u16, IoError> {
    Ok(u16::from_le_bytes(take(r)?))
}

pub(crate) fn get_u32(r: &mut impl Read) -> Result<u32, IoError> {
    Ok(u32::from_le_bytes(take(r)?))
}

pub(crate) fn get_u64(r: &mut impl Read) -> Result<u64, IoError> {
    Ok(u64::from_le_bytes(take(r)?))
}

pub(crate) fn get_i32(r: &mut impl Read) -> Result<i32, IoError> {
    Ok(i32::from_le_bytes(take(r)?))
}

pub(crate) fn get_f64(r: &mut impl Read) -> Result<f64, IoError> {
    Ok(f64::from_le_bytes(take(r)?))
}

// Labeled cloud PLY. One vertex element with position, normal, segmentation
// code and handle flag; see SegClass::to_code for the code convention.

const CLOUD_PLY_PROPERTIES: [&str; 8] = [
    "property double x",
    "property double y",
    "property double z",
    "property double nx",
    "property double ny",
    "property double nz",
    "property int seg",
    "property uchar handle",
];

pub fn write_cloud_ply<S: Real>(path: &Path, cloud: &LabeledCloud<S>) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "comment labeled interaction cloud")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in CLOUD_PLY_PROPERTIES {
        writeln!(w, "{p}")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        let n = cloud.normals[i].as_vec();
        for v in [p.x, p.y, p.z, n.x, n.y, n.z] {
            put_f64(&mut w, v.as_f64())?;
        }
        put_i32(&mut w, cloud.seg[i].to_code())?;
        put_u8(&mut w, cloud.handle[i] as u8)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud_ply<S: Real>(path: &Path) -> Result<LabeledCloud<S>, IoError> {
    let bytes = std::fs::read(path)?;
    let header_end = bytes
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or_else(|| IoError::FormatError {
            detail: "missing end_header".into(),
        })?
        + 11;
    let header = std::str::from_utf8(&bytes[..header_end]).map_err(|_| IoError::FormatError {
        detail: "non-utf8 header".into(),
    })?;
    let mut lines = header.lines().filter(|l| !l.starts_with("comment"));
    let expect = |got: Option<&str>, want: &str| -> Result<(), IoError> {
        match got {
            Some(l) if l == want => Ok(()),
            other => Err(IoError::FormatError {
                detail: format!("expected {want:?}, found {other:?}"),
            }),
        }
    };
    expect(lines.next(), "ply")?;
    expect(lines.next(), "format binary_little_endian 1.0")?;
    let n: usize = match lines.next() {
        Some(l) if l.starts_with("element vertex ") => l["element vertex ".len()..]
            .parse()
            .map_err(|_| IoError::FormatError {
                detail: "bad vertex count".into(),
            })?,
        other => {
            return Err(IoError::FormatError {
                detail: format!("expected vertex element, found {other:?}"),
            })
        }
    };
    for p in CLOUD_PLY_PROPERTIES {
        expect(lines.next(), p)?;
    }
    expect(lines.next(), "end_header")?;

    let mut r = &bytes[header_end..];
    let expected_len = n * (6 * 8 + 4 + 1);
    if r.len() != expected_len {
        return Err(corrupt(format!(
            "payload is {} bytes, expected {expected_len}",
            r.len()
        )));
    }
    let mut cloud = LabeledCloud::with_capacity(n);
    for _ in 0..n {
        let mut v = [0.0f64; 6];
        for slot in &mut v {
            *slot = get_f64(&mut r)?;
        }
        let seg = SegClass::from_code(get_i32(&mut r)?);
        let handle = get_u8(&mut r)? != 0;
        let normal = UnitVec3::new(Vec3::new(S::of(v[3]), S::of(v[4]), S::of(v[5])))
            .map_err(|e| corrupt(format!("bad stored normal: {e}")))?;
        cloud.push(crate::scene::PointSample {
            position: Vec3::new(S::of(v[0]), S::of(v[1]), S::of(v[2])),
            normal,
            seg,
            handle,
        });
    }
    cloud
        .validate()
        .map_err(|e| corrupt(format!("invalid cloud: {e}")))?;
    Ok(cloud)
}

// Scene JSON envelope.

#[derive(Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
struct SceneDoc<S: Real> {
    format_version: u32,
    scene: Scene<S>,
}

pub fn write_scene_json<S: Real>(path: &Path, scene: &Scene<S>) -> Result<(), IoError> {
    let doc = SceneDoc {
        format_version: SCENE_FORMAT_VERSION,
        scene: scene.clone(),
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &doc)?;
    w.flush()?;
    Ok(())
}

pub fn read_scene_json<S: Real>(path: &Path) -> Result<Scene<S>, IoError> {
    let bytes = std::fs::read(path)?;
    // Check the version before strict decoding so schema drift reports as a
    // version problem, not a parse error.
    #[derive(Deserialize)]
    struct VersionProbe {
        format_version: u32,
    }
    let probe: VersionProbe = serde_json::from_slice(&bytes)?;
    if probe.format_version != SCENE_FORMAT_VERSION {
        return Err(IoError::VersionMismatch {
            found: probe.format_version,
            expected: SCENE_FORMAT_VERSION,
        });
    }
    let doc: SceneDoc<S> = serde_json::from_slice(&bytes)?;
    Ok(doc.scene)
}

// Heatmap export: scored points colored on a blue-to-red ramp, everything
// else neutral gray.

fn score_color(score: f64) -> [u8; 3] {
    let s = score.clamp(0.0, 1.0);
    let r = (s * 255.0).round() as u8;
    [r, 40, 255 - r]
}

pub fn write_heatmap_ply<S: Real>(
    path: &Path,
    cloud: &LabeledCloud<S>,
    scores: &[(usize, f64)],
) -> Result<(), IoError> {
    let mut color = vec![[128u8, 128, 128]; cloud.len()];
    for &(idx, s) in scores {
        if idx >= cloud.len() {
            return Err(IoError::FormatError {
                detail: format!("score index {idx} outside cloud of {}", cloud.len()),
            });
        }
        color[idx] = score_color(s);
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "comment affordance heatmap")?;
    writeln!(w, "element vertex {}", cloud.len())?;
    for p in [
        "property double x",
        "property double y",
        "property double z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ] {
        writeln!(w, "{p}")?;
    }
    writeln!(w, "end_header")?;
    for i in 0..cloud.len() {
        let p = cloud.points[i];
        for v in [p.x, p.y, p.z] {
            put_f64(&mut w, v.as_f64())?;
        }
        w.write_all(&color[i])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_scores_csv(path: &Path, scores: &[(usize, f64)]) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "index,score")?;
    for &(idx, s) in scores {
        writeln!(w, "{idx},{s}")?;
    }
    w.flush()?;
    Ok(())
}
