//! Interaction collection with per-class quotas, contrastive triplet
//! assembly, train/test splits, and the on-disk dataset layout
//! (manifest.json + records.bin + scenes/*.json + clouds/*.ply).

use crate::io::{self, IoError};
use crate::oracle::{evaluate, Action, FailureReason, OracleConfig, OracleError};
use crate::scalar::Real;
use crate::scene::{
    augment_positive, augmented_cloud, generate_scene, sample_cloud, sample_negative_point,
    LabeledCloud, OccluderFamily, Region2, Scene, SceneError, SceneSpec, SegClass,
    DEFAULT_AUGMENT_BUDGET, NOVEL_FAMILIES, TRAIN_FAMILIES,
};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

pub const RECORDS_MAGIC: [u8; 4] = *b"AFRD";
pub const RECORDS_VERSION: u16 = 1;
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("quota for class {class:?} starved: {filled}/{want} after {attempts} attempts")]
    QuotaFailure {
        class: String,
        filled: usize,
        want: usize,
        attempts: u64,
    },
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("dataset invariant violated: {detail}")]
    Invalid { detail: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "test-seen")]
    TestSeen,
    #[serde(rename = "test-novel")]
    TestNovel,
}

/// One supervised interaction: a robot attempting `action` at a part point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct InteractionRecord<S: Real> {
    /// Index into the dataset's scene table.
    pub scene_ref: u32,
    /// Index into the cloud table; equals scene_ref for base records and
    /// points at the appended-occluder cloud for positives.
    pub cloud_ref: u32,
    pub robot: crate::geometry::Vec3<S>,
    pub point_index: u32,
    pub action: Action,
    pub label: bool,
    pub failure: Option<FailureReason>,
}

/// Record indices forming one contrastive triple: the positive shares the
/// anchor's point in an augmented scene, the negative is a different point
/// in the anchor's own scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: u32,
    pub positive: u32,
    pub negative: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub push_success: usize,
    pub push_failure: usize,
    pub pull_success: usize,
    pub pull_failure: usize,
}

impl ClassCounts {
    /// Paper-scale interaction counts divided by ten.
    pub fn desk_default() -> Self {
        Self {
            push_success: 90,
            push_failure: 90,
            pull_success: 30,
            pull_failure: 250,
        }
    }

    fn get(&self, action: Action, label: bool) -> usize {
        match (action, label) {
            (Action::Push, true) => self.push_success,
            (Action::Push, false) => self.push_failure,
            (Action::Pull, true) => self.pull_success,
            (Action::Pull, false) => self.pull_failure,
        }
    }

    fn bump(&mut self, action: Action, label: bool) {
        match (action, label) {
            (Action::Push, true) => self.push_success += 1,
            (Action::Push, false) => self.push_failure += 1,
            (Action::Pull, true) => self.pull_success += 1,
            (Action::Pull, false) => self.pull_failure += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.push_success + self.push_failure + self.pull_success + self.pull_failure
    }

    fn class_name(action: Action, label: bool) -> &'static str {
        match (action, label) {
            (Action::Push, true) => "push success",
            (Action::Push, false) => "push failure",
            (Action::Pull, true) => "pull success",
            (Action::Pull, false) => "pull failure",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub split: Split,
    pub master_seed: u64,
    pub num_scenes: usize,
    /// Anchor counts per (action, label) class.
    pub anchor_counts: ClassCounts,
    pub total_records: usize,
    pub num_triplets: usize,
    /// Occluder count -> number of scenes, over base scenes only.
    pub occluder_histogram: BTreeMap<u32, usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataSet<S: Real> {
    pub split: Split,
    pub master_seed: u64,
    /// Base scenes occupy slots [0, num_base); augmented positives follow.
    pub num_base_scenes: usize,
    pub scenes: Vec<Scene<S>>,
    pub clouds: Vec<LabeledCloud<S>>,
    pub records: Vec<InteractionRecord<S>>,
    pub triplets: Vec<Triplet>,
}

/// Parameters for training-split collection. Training scenes always carry
/// exactly one occluder from the training families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct CollectSpec<S: Real> {
    pub master_seed: u64,
    pub num_scenes: usize,
    /// Scene id offset; lets independent collections keep disjoint ids.
    pub id_base: u64,
    pub quotas: ClassCounts,
    /// Fraction of pull proposals drawn from handle-flagged points.
    pub handle_fraction: f64,
    /// Total proposal budget before reporting a starved class.
    pub attempt_budget: u64,
    pub n_raw: usize,
    pub n_out: usize,
    /// Placement attempts for the positive's extra occluder.
    pub augment_budget: u32,
    /// Minimum anchor-to-negative distance.
    pub negative_d_min: S,
    pub oracle: OracleConfig<S>,
}

impl<S: Real> CollectSpec<S> {
    pub fn new(master_seed: u64, num_scenes: usize, quotas: ClassCounts) -> Self {
        Self {
            master_seed,
            num_scenes,
            id_base: 0,
            quotas,
            handle_fraction: 0.5,
            attempt_budget: 200 * quotas.total().max(1) as u64,
            n_raw: 2048,
            n_out: 512,
            augment_budget: DEFAULT_AUGMENT_BUDGET,
            negative_d_min: S::of(0.05),
            oracle: OracleConfig::default(),
        }
    }
}

/// Parameters for the held-out evaluation splits: multi-occluder scenes
/// from either the training families (seen) or the held-out ones (novel).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSetSpec {
    pub master_seed: u64,
    pub num_scenes: usize,
    pub n_raw: usize,
    pub n_out: usize,
    pub min_occluders: u32,
    pub max_occluders: u32,
    /// Scene id offsets keeping test ids disjoint from train ids.
    pub id_base_seen: u64,
    pub id_base_novel: u64,
}

impl TestSetSpec {
    pub fn new(master_seed: u64, num_scenes: usize) -> Self {
        Self {
            master_seed,
            num_scenes,
            n_raw: 2048,
            n_out: 512,
            min_occluders: 2,
            max_occluders: 4,
            id_base_seen: 1_000_000,
            id_base_novel: 2_000_000,
        }
    }
}

/// SplitMix64 finalizer over a tagged input; used to derive independent
/// seed streams from one master seed.
pub fn stream_seed(master: u64, tag: u64, index: u64) -> u64 {
    let mut z = master
        ^ tag.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ index.wrapping_mul(0xE703_7ED1_A0B4_28DB);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const SEED_SCENE: u64 = 1;
const SEED_CLOUD: u64 = 2;
const SEED_PROPOSALS: u64 = 3;
const SEED_AUGMENT: u64 = 4;
const SEED_NEGATIVE: u64 = 5;
const SEED_AUGMENT_CLOUD: u64 = 6;
const SEED_TEST_SEEN: u64 = 7;
const SEED_TEST_NOVEL: u64 = 8;

/// Rejection-samples interactions until every (action, label) quota is met,
/// then attaches one contrastive triplet per anchor. Deterministic per
/// master seed.
pub fn collect<S: Real>(spec: &CollectSpec<S>) -> Result<DataSet<S>, DatasetError> {
    let mut scenes = Vec::with_capacity(spec.num_scenes);
    let mut clouds = Vec::with_capacity(spec.num_scenes);
    for i in 0..spec.num_scenes {
        let scene_spec = SceneSpec::new(
            spec.id_base + i as u64,
            stream_seed(spec.master_seed, SEED_SCENE, i as u64),
            1,
            TRAIN_FAMILIES.to_vec(),
        );
        let scene = generate_scene(&scene_spec)?;
        let cloud = sample_cloud(
            &scene,
            spec.n_raw,
            spec.n_out,
            stream_seed(spec.master_seed, SEED_CLOUD, i as u64),
        )?;
        scenes.push(scene);
        clouds.push(cloud);
    }
    let part_indices: Vec<Vec<usize>> = clouds.iter().map(|c| c.part_point_indices()).collect();
    let handle_indices: Vec<Vec<usize>> =
        clouds.iter().map(|c| c.handle_point_indices()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.master_seed, SEED_PROPOSALS, 0));
    let mut filled = ClassCounts::default();
    let mut records: Vec<InteractionRecord<S>> = Vec::new();
    let mut attempts: u64 = 0;
    while filled != spec.quotas {
        if attempts >= spec.attempt_budget {
            let starved = [
                (Action::Push, true),
                (Action::Push, false),
                (Action::Pull, true),
                (Action::Pull, false),
            ]
            .into_iter()
            .find(|&(a, l)| filled.get(a, l) < spec.quotas.get(a, l))
            .expect("loop continues only while some class is unfilled");
            return Err(DatasetError::QuotaFailure {
                class: ClassCounts::class_name(starved.0, starved.1).into(),
                filled: filled.get(starved.0, starved.1),
                want: spec.quotas.get(starved.0, starved.1),
                attempts,
            });
        }
        attempts += 1;
        let scene_i = rng.gen_range(0..spec.num_scenes);
        let action = if rng.gen::<f64>() < 0.5 {
            Action::Push
        } else {
            Action::Pull
        };
        let from_handles = action == Action::Pull
            && rng.gen::<f64>() < spec.handle_fraction
            && !handle_indices[scene_i].is_empty();
        let pool = if from_handles {
            &handle_indices[scene_i]
        } else {
            &part_indices[scene_i]
        };
        if pool.is_empty() {
            continue;
        }
        let point_index = pool[rng.gen_range(0..pool.len())];
        let verdict = evaluate(
            &scenes[scene_i],
            &clouds[scene_i],
            point_index,
            action,
            &spec.oracle,
        )?;
        if filled.get(action, verdict.label) >= spec.quotas.get(action, verdict.label) {
            continue;
        }
        filled.bump(action, verdict.label);
        records.push(InteractionRecord {
            scene_ref: scene_i as u32,
            cloud_ref: scene_i as u32,
            robot: scenes[scene_i].robot,
            point_index: point_index as u32,
            action,
            label: verdict.label,
            failure: verdict.failure,
        });
    }

    let num_base_scenes = scenes.len();
    let num_anchors = records.len();
    let mut triplets = Vec::with_capacity(num_anchors);
    let n_extra = (spec.n_out / 4).max(16);
    for a in 0..num_anchors {
        let anchor = records[a];
        let scene = scenes[anchor.scene_ref as usize].clone();
        let cloud = &clouds[anchor.cloud_ref as usize];
        let idx = anchor.point_index as usize;
        let tp = cloud.points[idx];
        let oracle_cfg = spec.oracle;
        let label_of = |s: &Scene<S>| {
            evaluate(s, cloud, idx, anchor.action, &oracle_cfg)
                .map(|v| v.label)
                .unwrap_or(false)
        };
        let (aug_scene, occ_index) = augment_positive(
            &scene,
            tp,
            &TRAIN_FAMILIES,
            &Region2::front_strip(),
            spec.augment_budget,
            stream_seed(spec.master_seed, SEED_AUGMENT, a as u64),
            label_of,
        )?;
        let aug_cloud = augmented_cloud(
            cloud,
            &aug_scene,
            occ_index,
            4 * n_extra,
            n_extra,
            stream_seed(spec.master_seed, SEED_AUGMENT_CLOUD, a as u64),
        )?;
        let pos_verdict = evaluate(&aug_scene, &aug_cloud, idx, anchor.action, &spec.oracle)?;
        let neg_idx = sample_negative_point(
            cloud,
            idx,
            spec.negative_d_min,
            stream_seed(spec.master_seed, SEED_NEGATIVE, a as u64),
        )?;
        let neg_verdict = evaluate(&scene, cloud, neg_idx, anchor.action, &spec.oracle)?;

        let slot = scenes.len() as u32;
        scenes.push(aug_scene);
        clouds.push(aug_cloud);
        let positive = records.len() as u32;
        records.push(InteractionRecord {
            scene_ref: slot,
            cloud_ref: slot,
            robot: anchor.robot,
            point_index: anchor.point_index,
            action: anchor.action,
            label: pos_verdict.label,
            failure: pos_verdict.failure,
        });
        let negative = records.len() as u32;
        records.push(InteractionRecord {
            scene_ref: anchor.scene_ref,
            cloud_ref: anchor.cloud_ref,
            robot: anchor.robot,
            point_index: neg_idx as u32,
            action: anchor.action,
            label: neg_verdict.label,
            failure: neg_verdict.failure,
        });
        triplets.push(Triplet {
            anchor: a as u32,
            positive,
            negative,
        });
    }

    let ds = DataSet {
        split: Split::Train,
        master_seed: spec.master_seed,
        num_base_scenes,
        scenes,
        clouds,
        records,
        triplets,
    };
    ds.validate(None)?;
    Ok(ds)
}

/// Builds the two evaluation splits. Scenes draw 2 to 4 occluders from the
/// training families (seen) or the held-out families (novel); scene ids
/// never overlap the training ids.
pub fn build_test_sets<S: Real>(
    spec: &TestSetSpec,
) -> Result<(DataSet<S>, DataSet<S>), DatasetError> {
    let build = |split: Split,
                 tag: u64,
                 id_base: u64,
                 families: &[OccluderFamily]|
     -> Result<DataSet<S>, DatasetError> {
        let mut scenes = Vec::with_capacity(spec.num_scenes);
        let mut clouds = Vec::with_capacity(spec.num_scenes);
        for i in 0..spec.num_scenes {
            let mut pick =
                ChaCha8Rng::seed_from_u64(stream_seed(spec.master_seed, tag, 2 * i as u64));
            let n_occ = pick.gen_range(spec.min_occluders..=spec.max_occluders);
            // Crowded draws (several large occluders) can make placement
            // infeasible; deterministically reseed until one fits.
            let mut scene = None;
            for retry in 0..50u64 {
                let scene_spec = SceneSpec::new(
                    id_base + i as u64,
                    stream_seed(spec.master_seed, tag, 2 * i as u64 + 1)
                        .wrapping_add(retry.wrapping_mul(0x9E37_79B9)),
                    n_occ,
                    families.to_vec(),
                );
                match generate_scene(&scene_spec) {
                    Ok(s) => {
                        scene = Some(s);
                        break;
                    }
                    Err(SceneError::PlacementFailure { .. }) => continue,
                    Err(e) => return Err(e.into()),
                }
            }
            let scene = scene.ok_or(SceneError::PlacementFailure { attempts: 50 })?;
            let cloud = sample_cloud(
                &scene,
                spec.n_raw,
                spec.n_out,
                stream_seed(spec.master_seed, tag + 10, i as u64),
            )?;
            scenes.push(scene);
            clouds.push(cloud);
        }
        Ok(DataSet {
            split,
            master_seed: spec.master_seed,
            num_base_scenes: spec.num_scenes,
            scenes,
            clouds,
            records: Vec::new(),
            triplets: Vec::new(),
        })
    };
    let seen = build(
        Split::TestSeen,
        SEED_TEST_SEEN,
        spec.id_base_seen,
        &TRAIN_FAMILIES,
    )?;
    let novel = build(
        Split::TestNovel,
        SEED_TEST_NOVEL,
        spec.id_base_novel,
        &NOVEL_FAMILIES,
    )?;
    Ok((seen, novel))
}

impl<S: Real> DataSet<S> {
    pub fn manifest(&self) -> DatasetManifest {
        let mut anchor_counts = ClassCounts::default();
        for t in &self.triplets {
            let a = &self.records[t.anchor as usize];
            anchor_counts.bump(a.action, a.label);
        }
        if self.triplets.is_empty() {
            // Splits without triplets count every record as an anchor.
            for r in &self.records {
                anchor_counts.bump(r.action, r.label);
            }
        }
        let mut occluder_histogram = BTreeMap::new();
        for s in self.scenes.iter().take(self.num_base_scenes) {
            *occluder_histogram
                .entry(s.occluders.len() as u32)
                .or_insert(0) += 1;
        }
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            split: self.split,
            master_seed: self.master_seed,
            num_scenes: self.scenes.len(),
            anchor_counts,
            total_records: self.records.len(),
            num_triplets: self.triplets.len(),
            occluder_histogram,
        }
    }

    /// Checks structural invariants; with an oracle config also re-verifies
    /// every stored label against a fresh evaluation.
    pub fn validate(&self, oracle: Option<&OracleConfig<S>>) -> Result<(), DatasetError> {
        let fail = |detail: String| Err(DatasetError::Invalid { detail });
        if self.scenes.len() != self.clouds.len() {
            return fail(format!(
                "{} scenes but {} clouds",
                self.scenes.len(),
                self.clouds.len()
            ));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.scene_ref as usize >= self.scenes.len()
                || r.cloud_ref as usize >= self.clouds.len()
            {
                return fail(format!("record {i} references a missing scene or cloud"));
            }
            let cloud = &self.clouds[r.cloud_ref as usize];
            if r.point_index as usize >= cloud.len() {
                return fail(format!("record {i} point index out of range"));
            }
            if !matches!(cloud.seg[r.point_index as usize], SegClass::Part(_)) {
                return fail(format!("record {i} anchors a non-part point"));
            }
            if r.label != r.failure.is_none() {
                return fail(format!("record {i} label and failure reason disagree"));
            }
            if self.scenes[r.scene_ref as usize].robot != r.robot {
                return fail(format!("record {i} robot differs from its scene"));
            }
        }
        for (i, t) in self.triplets.iter().enumerate() {
            let get = |j: u32| -> Result<&InteractionRecord<S>, DatasetError> {
                self.records
                    .get(j as usize)
                    .ok_or_else(|| DatasetError::Invalid {
                        detail: format!("triplet {i} references missing record {j}"),
                    })
            };
            let a = get(t.anchor)?;
            let p = get(t.positive)?;
            let n = get(t.negative)?;
            if p.point_index != a.point_index {
                return fail(format!("triplet {i}: positive moved off the anchor point"));
            }
            if p.label != a.label {
                return fail(format!("triplet {i}: positive label flipped"));
            }
            if n.point_index == a.point_index {
                return fail(format!("triplet {i}: negative reuses the anchor point"));
            }
            if n.scene_ref != a.scene_ref {
                return fail(format!("triplet {i}: negative left the anchor scene"));
            }
            if p.robot != a.robot || n.robot != a.robot {
                return fail(format!("triplet {i}: robot changed within the triple"));
            }
            if p.action != a.action || n.action != a.action {
                return fail(format!("triplet {i}: action changed within the triple"));
            }
        }
        if let Some(cfg) = oracle {
            for (i, r) in self.records.iter().enumerate() {
                let v = evaluate(
                    &self.scenes[r.scene_ref as usize],
                    &self.clouds[r.cloud_ref as usize],
                    r.point_index as usize,
                    r.action,
                    cfg,
                )?;
                if v.label != r.label {
                    return fail(format!(
                        "record {i} stored label {} but re-evaluation gives {}",
                        r.label as u8, v.label as u8
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir.join("scenes")).map_err(IoError::from)?;
        std::fs::create_dir_all(dir.join("clouds")).map_err(IoError::from)?;
        let manifest = self.manifest();
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(dir.join("manifest.json")).map_err(IoError::from)?,
        );
        serde_json::to_writer_pretty(&mut w, &manifest).map_err(IoError::from)?;
        w.flush().map_err(IoError::from)?;
        write_records(&dir.join("records.bin"), self)?;
        for (i, scene) in self.scenes.iter().enumerate() {
            io::write_scene_json(&dir.join(format!("scenes/scene_{i:05}.json")), scene)?;
        }
        for (i, cloud) in self.clouds.iter().enumerate() {
            io::write_cloud_ply(&dir.join(format!("clouds/cloud_{i:05}.ply")), cloud)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<DataSet<S>, DatasetError> {
        let manifest: DatasetManifest = serde_json::from_slice(
            &std::fs::read(dir.join("manifest.json")).map_err(IoError::from)?,
        )
        .map_err(IoError::from)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(IoError::VersionMismatch {
                found: manifest.format_version,
                expected: MANIFEST_VERSION,
            }
            .into());
        }
        let (records, triplets, num_base_scenes) = read_records(&dir.join("records.bin"))?;
        let mut scenes = Vec::with_capacity(manifest.num_scenes);
        let mut clouds = Vec::with_capacity(manifest.num_scenes);
        for i in 0..manifest.num_scenes {
            scenes.push(io::read_scene_json(
                &dir.join(format!("scenes/scene_{i:05}.json")),
            )?);
            clouds.push(io::read_cloud_ply(
                &dir.join(format!("clouds/cloud_{i:05}.ply")),
            )?);
        }
        let ds = DataSet {
            split: manifest.split,
            master_seed: manifest.master_seed,
            num_base_scenes,
            scenes,
            clouds,
            records,
            triplets,
        };
        ds.validate(None)?;
        let check = ds.manifest();
        if check != manifest {
            return Err(DatasetError::Invalid {
                detail: "manifest counts disagree with stored records".into(),
            });
        }
        Ok(ds)
    }
}

fn write_records<S: Real>(path: &Path, ds: &DataSet<S>) -> Result<(), DatasetError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(IoError::from)?);
    w.write_all(&RECORDS_MAGIC).map_err(IoError::from)?;
    io::put_u16(&mut w, RECORDS_VERSION)?;
    io::put_u64(&mut w, ds.num_base_scenes as u64)?;
    io::put_u32(&mut w, ds.records.len() as u32)?;
    for r in &ds.records {
        let mut payload = Vec::new();
        io::put_u32(&mut payload, r.scene_ref)?;
        io::put_u32(&mut payload, r.cloud_ref)?;
        for v in [r.robot.x, r.robot.y, r.robot.z] {
            io::put_f64(&mut payload, v.as_f64())?;
        }
        io::put_u32(&mut payload, r.point_index)?;
        io::put_u8(&mut payload, r.action.to_code())?;
        io::put_u8(&mut payload, r.label as u8)?;
        io::put_u8(&mut payload, r.failure.map_or(255, |f| f.to_code()))?;
        io::put_u16(&mut w, payload.len() as u16)?;
        w.write_all(&payload).map_err(IoError::from)?;
    }
    io::put_u32(&mut w, ds.triplets.len() as u32)?;
    for t in &ds.triplets {
        io::put_u32(&mut w, t.anchor)?;
        io::put_u32(&mut w, t.positive)?;
        io::put_u32(&mut w, t.negative)?;
    }
    w.flush().map_err(IoError::from)?;
    Ok(())
}

type RecordsFile<S> = (Vec<InteractionRecord<S>>, Vec<Triplet>, usize);

fn read_records<S: Real>(path: &Path) -> Result<RecordsFile<S>, DatasetError> {
    let bytes = std::fs::read(path).map_err(IoError::from)?;
    let mut r = bytes.as_slice();
    let corrupt = |detail: &str| -> DatasetError {
        IoError::CorruptData {
            detail: detail.into(),
        }
        .into()
    };
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("missing magic"))?;
    }
    if magic != RECORDS_MAGIC {
        return Err(corrupt("bad records magic"));
    }
    let version = io::get_u16(&mut r)?;
    if version != RECORDS_VERSION {
        return Err(IoError::VersionMismatch {
            found: version as u32,
            expected: RECORDS_VERSION as u32,
        }
        .into());
    }
    let num_base_scenes = io::get_u64(&mut r)? as usize;
    let n_records = io::get_u32(&mut r)? as usize;
    let mut records = Vec::with_capacity(n_records);
    for _ in 0..n_records {
        let len = io::get_u16(&mut r)? as usize;
        if r.len() < len {
            return Err(corrupt("record payload truncated"));
        }
        let (mut payload, rest) = r.split_at(len);
        r = rest;
        let scene_ref = io::get_u32(&mut payload)?;
        let cloud_ref = io::get_u32(&mut payload)?;
        let robot = crate::geometry::Vec3::new(
            S::of(io::get_f64(&mut payload)?),
            S::of(io::get_f64(&mut payload)?),
            S::of(io::get_f64(&mut payload)?),
        );
        let point_index = io::get_u32(&mut payload)?;
        let action = Action::from_code(io::get_u8(&mut payload)?)
            .ok_or_else(|| corrupt("unknown action code"))?;
        let label = io::get_u8(&mut payload)? != 0;
        let failure = match io::get_u8(&mut payload)? {
            255 => None,
            c => Some(FailureReason::from_code(c).ok_or_else(|| corrupt("unknown failure code"))?),
        };
        records.push(InteractionRecord {
            scene_ref,
            cloud_ref,
            robot,
            point_index,
            action,
            label,
            failure,
        });
    }
    let n_triplets = io::get_u32(&mut r)? as usize;
    let mut triplets = Vec::with_capacity(n_triplets);
    for _ in 0..n_triplets {
        triplets.push(Triplet {
            anchor: io::get_u32(&mut r)?,
            positive: io::get_u32(&mut r)?,
            negative: io::get_u32(&mut r)?,
        });
    }
    if !r.is_empty() {
        return Err(corrupt("trailing bytes after triplet table"));
    }
    Ok((records, triplets, num_base_scenes))
}
