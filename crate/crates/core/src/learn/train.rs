//! Training objective and loop: absolute-error supervision on every record
//! plus a hinged triple margin on scene embeddings, optimized with
//! adaptive moments over whole-triple batches. Deterministic per seed.

use super::model::{Ablation, Grads, Model, RecordInputs};
use super::nn::{AdamConfig, AdamState, Linear};
use super::LearnError;
use crate::dataset::{stream_seed, DataSet};
use crate::io::{self, IoError};
use crate::oracle::Action;
use crate::scalar::Real;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AFCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Squared Euclidean distance.
fn dist_sq<S: Real>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(S::zero(), |acc, v| acc + v)
}

/// Hinged margin on embedding triples: zero once the negative is farther
/// than the positive by at least `alpha`.
pub fn triplet_loss<S: Real>(f_anchor: &[S], f_pos: &[S], f_neg: &[S], alpha: S) -> S {
    let raw = dist_sq(f_anchor, f_pos) - dist_sq(f_anchor, f_neg) + alpha;
    raw.max(S::zero())
}

/// Derivatives of `triplet_loss` with respect to the three embeddings;
/// `None` when the hinge is inactive.
pub fn triplet_loss_grads<S: Real>(
    f_anchor: &[S],
    f_pos: &[S],
    f_neg: &[S],
    alpha: S,
) -> Option<(Vec<S>, Vec<S>, Vec<S>)> {
    if triplet_loss(f_anchor, f_pos, f_neg, alpha) <= S::zero() {
        return None;
    }
    let two = S::of(2.0);
    let mut da = vec![S::zero(); f_anchor.len()];
    let mut dp = vec![S::zero(); f_anchor.len()];
    let mut dn = vec![S::zero(); f_anchor.len()];
    for i in 0..f_anchor.len() {
        let ap = f_anchor[i] - f_pos[i];
        let an = f_anchor[i] - f_neg[i];
        da[i] = two * ap - two * an;
        dp[i] = -two * ap;
        dn[i] = two * an;
    }
    Some((da, dp, dn))
}

/// Absolute-error supervision against a binary label.
pub fn affordance_loss<S: Real>(pred: S, label: bool) -> S {
    let y = if label { S::one() } else { S::zero() };
    (pred - y).abs()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct TrainConfig<S: Real> {
    pub seed: u64,
    pub epochs: usize,
    /// Triples per batch; each contributes three supervised records.
    pub batch_triplets: usize,
    pub learning_rate: S,
    /// Margin of the embedding hinge.
    pub alpha: S,
    /// Weight of the embedding term in the total objective.
    pub lambda_cl: S,
    pub k_significant: usize,
    pub ablation: Ablation,
    pub adam: AdamConfig<S>,
}

impl<S: Real> TrainConfig<S> {
    pub fn new(seed: u64, epochs: usize, k_significant: usize, ablation: Ablation) -> Self {
        Self {
            seed,
            epochs,
            batch_triplets: 10,
            learning_rate: S::of(0.001),
            alpha: S::of(2.0),
            lambda_cl: S::of(1.0),
            k_significant,
            ablation,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub step: u64,
    pub loss_total: f64,
    pub loss_aff: f64,
    pub loss_cl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult<S: Real> {
    pub model: Model<S>,
    pub adam: AdamState<S>,
    pub curve: Vec<CurvePoint>,
}

/// One epoch's triple schedule. Alternates the two anchor-label classes so
/// every batch carries both; under a heavily imbalanced mix the L1 term's
/// majority sign otherwise drags every squashed score into the flat tail
/// of the squash, where gradients vanish before the rare class separates.
/// The majority class is consumed exactly once per epoch; the minority is
/// re-shuffled and cycled to match.
fn epoch_order(succ: &[usize], fail: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    fn shuffled(items: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut v = items.to_vec();
        for i in (1..v.len()).rev() {
            v.swap(i, rng.gen_range(0..=i));
        }
        v
    }
    if succ.is_empty() || fail.is_empty() {
        let all: Vec<usize> = succ.iter().chain(fail).copied().collect();
        return shuffled(&all, rng);
    }
    let (major, minor) = if fail.len() >= succ.len() {
        (fail, succ)
    } else {
        (succ, fail)
    };
    let maj = shuffled(major, rng);
    let mut min_deck = Vec::with_capacity(maj.len());
    while min_deck.len() < maj.len() {
        min_deck.extend(shuffled(minor, rng));
    }
    min_deck.truncate(maj.len());
    let mut order = Vec::with_capacity(2 * maj.len());
    for (a, b) in maj.iter().zip(&min_deck) {
        order.push(*a);
        order.push(*b);
    }
    order
}

/// Trains one action-specific model on the dataset's triples for that
/// action. Record inputs are parameter-independent and built once; batches
/// follow the interleaved schedule of `epoch_order`.
pub fn train<S: Real>(
    dataset: &DataSet<S>,
    action: Action,
    cfg: &TrainConfig<S>,
) -> Result<TrainResult<S>, LearnError> {
    let triplets: Vec<crate::dataset::Triplet> = dataset
        .triplets
        .iter()
        .copied()
        .filter(|t| dataset.records[t.anchor as usize].action == action)
        .collect();
    if triplets.is_empty() {
        return Err(LearnError::EmptyTrainingSet);
    }

    let mut inputs: BTreeMap<u32, RecordInputs<S>> = BTreeMap::new();
    for t in &triplets {
        for id in [t.anchor, t.positive, t.negative] {
            if let std::collections::btree_map::Entry::Vacant(e) = inputs.entry(id) {
                let r = &dataset.records[id as usize];
                e.insert(RecordInputs::build(
                    &dataset.clouds[r.cloud_ref as usize],
                    r.robot,
                    r.point_index as usize,
                    cfg.k_significant,
                )?);
            }
        }
    }

    let mut model = Model::new(
        stream_seed(cfg.seed, 0x6D6F64, 0),
        cfg.k_significant,
        cfg.ablation,
    );
    let mut adam = AdamState::new(model.param_count(), cfg.adam);
    let mut grads = Grads::zeros_like(&model);
    let mut curve = Vec::new();
    let lambda = if cfg.ablation == Ablation::NoContrastive {
        S::zero()
    } else {
        cfg.lambda_cl
    };

    let succ: Vec<usize> = (0..triplets.len())
        .filter(|&i| dataset.records[triplets[i].anchor as usize].label)
        .collect();
    let fail: Vec<usize> = (0..triplets.len())
        .filter(|&i| !dataset.records[triplets[i].anchor as usize].label)
        .collect();

    let mut step: u64 = 0;
    for epoch in 0..cfg.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, 0x657063, epoch as u64));
        let order = epoch_order(&succ, &fail, &mut shuffle_rng);

        for batch in order.chunks(cfg.batch_triplets) {
            grads.zero();
            let n_records = (3 * batch.len()) as f64;
            let n_triples = batch.len() as f64;

            // Forward every record in the batch, keeping caches for the
            // backward pass and the embedding term.
            let mut caches = Vec::with_capacity(batch.len());
            let mut loss_aff = 0.0;
            for &ti in batch {
                let t = triplets[ti];
                let mut trio = Vec::with_capacity(3);
                for id in [t.anchor, t.positive, t.negative] {
                    let r = &dataset.records[id as usize];
                    let inp = &inputs[&id];
                    let (score, cache) = model.forward(inp)?;
                    loss_aff += affordance_loss(score, r.label).as_f64();
                    trio.push((id, r.label, cache));
                }
                caches.push(trio);
            }
            loss_aff /= n_records;

            let mut loss_cl = 0.0;
            let mut embed_grads: Vec<[Option<Vec<S>>; 3]> = Vec::with_capacity(batch.len());
            for trio in &caches {
                let (fa, fp, fnn) = (&trio[0].2.f_scene, &trio[1].2.f_scene, &trio[2].2.f_scene);
                loss_cl += triplet_loss(fa, fp, fnn, cfg.alpha).as_f64();
                if lambda > S::zero() {
                    match triplet_loss_grads(fa, fp, fnn, cfg.alpha) {
                        Some((da, dp, dn)) => {
                            let scale = lambda / S::of(n_triples);
                            let scaled =
                                |v: Vec<S>| v.into_iter().map(|x| x * scale).collect::<Vec<S>>();
                            embed_grads.push([
                                Some(scaled(da)),
                                Some(scaled(dp)),
                                Some(scaled(dn)),
                            ]);
                        }
                        None => embed_grads.push([None, None, None]),
                    }
                } else {
                    embed_grads.push([None, None, None]);
                }
            }
            loss_cl /= n_triples;
            let loss_total = loss_aff + lambda.as_f64() * loss_cl;
            if !loss_total.is_finite() {
                return Err(LearnError::NonFiniteGradient { step });
            }

            for (trio, eg) in caches.iter().zip(&embed_grads) {
                for (slot, &(id, label, ref cache)) in trio.iter().enumerate() {
                    let y = if label { S::one() } else { S::zero() };
                    let diff = cache.score - y;
                    let sign = if diff > S::zero() {
                        S::one()
                    } else if diff < S::zero() {
                        -S::one()
                    } else {
                        S::zero()
                    };
                    let d_score = sign / S::of(n_records);
                    model.backward(
                        &inputs[&id],
                        cache,
                        d_score,
                        eg[slot].as_deref(),
                        &mut grads,
                    );
                }
            }

            let flat = grads.flatten();
            if flat.iter().any(|g| !g.as_f64().is_finite()) {
                return Err(LearnError::NonFiniteGradient { step });
            }
            adam.step(cfg.learning_rate, &flat, |f| model.visit_params_mut(f))?;
            curve.push(CurvePoint {
                epoch,
                step,
                loss_total,
                loss_aff,
                loss_cl,
            });
            step += 1;
        }
    }

    Ok(TrainResult { model, adam, curve })
}

pub fn write_loss_curve(path: &Path, curve: &[CurvePoint]) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "epoch,step,loss_total,loss_aff,loss_cl")?;
    for c in curve {
        writeln!(
            w,
            "{},{},{},{},{}",
            c.epoch, c.step, c.loss_total, c.loss_aff, c.loss_cl
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Versioned binary checkpoint: layer shapes, row-major parameters, and the
/// optimizer moments.
pub fn save_checkpoint<S: Real>(
    path: &Path,
    model: &Model<S>,
    adam: Option<&AdamState<S>>,
) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(&CHECKPOINT_MAGIC)?;
    io::put_u16(&mut w, CHECKPOINT_VERSION)?;
    io::put_u32(&mut w, model.k_significant as u32)?;
    io::put_u8(&mut w, model.ablation.to_code())?;
    let dims = [
        model.dims.robot_hidden,
        model.dims.point_hidden,
        model.dims.phi,
        model.dims.field_hidden,
        model.dims.pred_hidden,
        model.dims.embed,
    ];
    for d in dims {
        io::put_u32(&mut w, d as u32)?;
    }
    let layers = model.layers();
    io::put_u8(&mut w, layers.len() as u8)?;
    for l in &layers {
        io::put_u32(&mut w, l.n_in as u32)?;
        io::put_u32(&mut w, l.n_out as u32)?;
    }
    for l in &layers {
        for v in l.w.iter().chain(&l.b) {
            io::put_f64(&mut w, v.as_f64())?;
        }
    }
    match adam {
        None => io::put_u8(&mut w, 0)?,
        Some(a) => {
            io::put_u8(&mut w, 1)?;
            io::put_u64(&mut w, a.t)?;
            for v in [a.cfg.beta1, a.cfg.beta2, a.cfg.epsilon] {
                io::put_f64(&mut w, v.as_f64())?;
            }
            io::put_u64(&mut w, a.m.len() as u64)?;
            for v in a.m.iter().chain(&a.v) {
                io::put_f64(&mut w, v.as_f64())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<S: Real>(path: &Path) -> Result<(Model<S>, Option<AdamState<S>>), IoError> {
    let bytes = std::fs::read(path)?;
    let mut r = bytes.as_slice();
    let corrupt = |detail: &str| IoError::CorruptData {
        detail: detail.into(),
    };
    let mut magic = [0u8; 4];
    {
        use std::io::Read;
        r.read_exact(&mut magic)
            .map_err(|_| corrupt("missing magic"))?;
    }
    if magic != CHECKPOINT_MAGIC {
        return Err(corrupt("bad checkpoint magic"));
    }
    let version = io::get_u16(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(IoError::VersionMismatch {
            found: version as u32,
            expected: CHECKPOINT_VERSION as u32,
        });
    }
    let k_significant = io::get_u32(&mut r)? as usize;
    let ablation =
        Ablation::from_code(io::get_u8(&mut r)?).ok_or_else(|| corrupt("unknown ablation code"))?;
    let mut d = [0usize; 6];
    for v in &mut d {
        *v = io::get_u32(&mut r)? as usize;
    }
    let dims = super::model::ModelDims {
        robot_hidden: d[0],
        point_hidden: d[1],
        phi: d[2],
        field_hidden: d[3],
        pred_hidden: d[4],
        embed: d[5],
    };
    let n_layers = io::get_u8(&mut r)? as usize;
    if n_layers != super::model::NUM_LAYERS {
        return Err(corrupt("unexpected layer count"));
    }
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let n_in = io::get_u32(&mut r)? as usize;
        let n_out = io::get_u32(&mut r)? as usize;
        shapes.push((n_in, n_out));
    }
    let mut model = Model::with_dims(0, dims, k_significant, ablation);
    {
        let layers = model.layers_mut();
        for (l, &(n_in, n_out)) in layers.into_iter().zip(&shapes) {
            if l.n_in != n_in || l.n_out != n_out {
                return Err(corrupt("layer shape disagrees with dims"));
            }
            *l = Linear {
                n_in,
                n_out,
                w: Vec::new(),
                b: Vec::new(),
            };
            let mut w = Vec::with_capacity(n_in * n_out);
            for _ in 0..n_in * n_out {
                w.push(S::of(io::get_f64(&mut r)?));
            }
            let mut b = Vec::with_capacity(n_out);
            for _ in 0..n_out {
                b.push(S::of(io::get_f64(&mut r)?));
            }
            l.w = w;
            l.b = b;
        }
    }
    let adam = match io::get_u8(&mut r)? {
        0 => None,
        1 => {
            let t = io::get_u64(&mut r)?;
            let cfg = AdamConfig {
                beta1: S::of(io::get_f64(&mut r)?),
                beta2: S::of(io::get_f64(&mut r)?),
                epsilon: S::of(io::get_f64(&mut r)?),
            };
            let len = io::get_u64(&mut r)? as usize;
            if len != model.param_count() {
                return Err(corrupt("optimizer length disagrees with model"));
            }
            let mut m = Vec::with_capacity(len);
            for _ in 0..len {
                m.push(S::of(io::get_f64(&mut r)?));
            }
            let mut v = Vec::with_capacity(len);
            for _ in 0..len {
                v.push(S::of(io::get_f64(&mut r)?));
            }
            Some(AdamState { t, m, v, cfg })
        }
        _ => return Err(corrupt("bad optimizer flag")),
    };
    if !r.is_empty() {
        return Err(corrupt("trailing bytes in checkpoint"));
    }
    Ok((model, adam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{collect, ClassCounts, CollectSpec};

    fn tiny_dataset(seed: u64) -> DataSet<f64> {
        let quotas = ClassCounts {
            push_success: 3,
            push_failure: 3,
            pull_success: 2,
            pull_failure: 4,
        };
        let spec = CollectSpec {
            n_raw: 600,
            n_out: 150,
            ..CollectSpec::new(seed, 10, quotas)
        };
        collect(&spec).unwrap()
    }

    #[test]
    fn triplet_loss_hand_examples() {
        let zeros = vec![0.0; 4];
        let mut neg = zeros.clone();
        neg[0] = (3.0f64).sqrt();
        // Identical anchor/positive, negative at squared distance 3.
        assert_eq!(triplet_loss(&zeros, &zeros, &neg, 2.0), 0.0);
        assert!(triplet_loss_grads(&zeros, &zeros, &neg, 2.0).is_none());
        // All equal: the margin itself.
        assert_eq!(triplet_loss(&zeros, &zeros, &zeros, 2.0), 2.0);
        // Equal distances: the margin again.
        let mut pos = zeros.clone();
        pos[1] = 1.0;
        let mut neg1 = zeros.clone();
        neg1[2] = 1.0;
        assert_eq!(triplet_loss(&zeros, &pos, &neg1, 2.0), 2.0);
    }

    #[test]
    fn affordance_loss_hand_examples() {
        assert!((affordance_loss(0.7_f64, true) - 0.3).abs() < 1e-15);
        assert_eq!(affordance_loss(0.0, false), 0.0);
        assert_eq!(affordance_loss(1.0, false), 1.0);
    }

    #[test]
    fn triplet_grads_match_finite_differences() {
        use rand::Rng;
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let mut accepted = 0;
        while accepted < 100 {
            let dim = rng.gen_range(2..6);
            let rand_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> {
                (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let (fa, fp, fnn) = (rand_vec(&mut rng), rand_vec(&mut rng), rand_vec(&mut rng));
            let alpha = rng.gen_range(0.5..3.0);
            let slack = dist_sq(&fa, &fp) - dist_sq(&fa, &fnn) + alpha;
            if slack.abs() < 1e-3 || slack < 0.0 {
                continue;
            }
            accepted += 1;
            let (da, dp, dn) = triplet_loss_grads(&fa, &fp, &fnn, alpha).unwrap();
            for i in 0..dim {
                let fd = |which: usize, idx: usize, delta: f64| -> f64 {
                    let mut a = fa.clone();
                    let mut p = fp.clone();
                    let mut n = fnn.clone();
                    match which {
                        0 => a[idx] += delta,
                        1 => p[idx] += delta,
                        _ => n[idx] += delta,
                    }
                    triplet_loss(&a, &p, &n, alpha)
                };
                for (which, g) in [(0, &da), (1, &dp), (2, &dn)] {
                    let est = (fd(which, i, h) - fd(which, i, -h)) / (2.0 * h);
                    assert!((g[i] - est).abs() < 1e-6, "component {i} of {which}");
                }
            }
        }
    }

    #[test]
    fn training_is_deterministic_and_loss_drops() {
        let ds = tiny_dataset(31);
        let cfg = TrainConfig::new(5, 50, 12, Ablation::None);
        let a = train(&ds, Action::Push, &cfg).unwrap();
        let b = train(&ds, Action::Push, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.curve, b.curve);

        let head: f64 =
            a.curve.iter().take(3).map(|c| c.loss_total).sum::<f64>() / 3.0;
        let tail: f64 =
            a.curve.iter().rev().take(3).map(|c| c.loss_total).sum::<f64>() / 3.0;
        assert!(
            tail <= 0.5 * head,
            "loss did not halve: first {head}, last {tail}"
        );
    }

    #[test]
    fn ablations_train_and_behave() {
        let ds = tiny_dataset(32);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::new(6, 2, 12, Ablation::NoField)
        };
        let r = train(&ds, Action::Pull, &cfg).unwrap();
        // Zero scene embedding: the margin term is stuck at alpha.
        for c in &r.curve {
            assert!((c.loss_cl - cfg.alpha).abs() < 1e-12);
        }
        let cfg_nocl = TrainConfig {
            epochs: 2,
            ..TrainConfig::new(6, 2, 12, Ablation::NoContrastive)
        };
        let r2 = train(&ds, Action::Pull, &cfg_nocl).unwrap();
        for c in &r2.curve {
            assert_eq!(c.loss_total, c.loss_aff);
        }
    }

    #[test]
    fn checkpoint_roundtrip_with_optimizer() {
        let ds = tiny_dataset(31);
        let cfg = TrainConfig::new(7, 2, 12, Ablation::None);
        let r = train(&ds, Action::Push, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        save_checkpoint(&path, &r.model, Some(&r.adam)).unwrap();
        let (model, adam) = load_checkpoint::<f64>(&path).unwrap();
        assert_eq!(model, r.model);
        assert_eq!(adam.unwrap(), r.adam);

        let bytes = std::fs::read(&path).unwrap();
        let mut reversioned = bytes.clone();
        reversioned[4] = 9;
        std::fs::write(&path, &reversioned).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(IoError::VersionMismatch { found: 9, .. })
        ));
        std::fs::write(&path, &bytes[..30]).unwrap();
        assert!(matches!(
            load_checkpoint::<f64>(&path),
            Err(IoError::CorruptData { .. })
        ));
    }

    #[test]
    fn loss_curve_csv_layout() {
        let curve = vec![
            CurvePoint {
                epoch: 0,
                step: 0,
                loss_total: 1.5,
                loss_aff: 0.5,
                loss_cl: 1.0,
            },
            CurvePoint {
                epoch: 0,
                step: 1,
                loss_total: 1.25,
                loss_aff: 0.25,
                loss_cl: 1.0,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        write_loss_curve(&path, &curve).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "epoch,step,loss_total,loss_aff,loss_cl");
        assert_eq!(lines[1], "0,0,1.5,0.5,1");
        assert_eq!(lines.len(), 3);
    }
}
