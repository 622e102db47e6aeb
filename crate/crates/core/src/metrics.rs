//! Prediction-quality measures over scored records and proposal-based
//! interaction accuracy on whole scenes.

use crate::dataset::{stream_seed, Split};
use crate::learn::{LearnError, Model, RecordInputs};
use crate::oracle::{evaluate, Action, OracleConfig, OracleError};
use crate::scalar::Real;
use crate::scene::{LabeledCloud, Scene};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const SEED_PROPOSALS: u64 = 0x736D61;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("prediction/label lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no positive labels; ranking quality is undefined")]
    NoPositives,
    #[error("scene {scene} has no scorable target points")]
    EmptyScene { scene: usize },
    #[error("invalid proposal policy: {detail}")]
    BadPolicy { detail: String },
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Binary confusion counts at a fixed threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn precision(&self) -> f64 {
        let denom = self.tp + self.fp;
        if denom == 0 {
            0.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let denom = self.tp + self.fn_;
        if denom == 0 {
            0.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    /// Harmonic mean of precision and recall; zero when both are zero.
    pub fn f_score(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Counts predictions `>= tau` against binary labels.
pub fn confusion<S: Real>(
    preds: &[S],
    labels: &[bool],
    tau: S,
) -> Result<Confusion, MetricsError> {
    if preds.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    let mut c = Confusion::default();
    for (&p, &y) in preds.iter().zip(labels) {
        match (p >= tau, y) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn f_score<S: Real>(preds: &[S], labels: &[bool], tau: S) -> Result<f64, MetricsError> {
    Ok(confusion(preds, labels, tau)?.f_score())
}

/// Rank-based average precision: precision accumulated at each positive in
/// descending-score order, ties broken by index. No interpolation.
pub fn average_precision<S: Real>(scores: &[S], labels: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            left: scores.len(),
            right: labels.len(),
        });
    }
    let num_pos = labels.iter().filter(|&&y| y).count();
    if num_pos == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores must be finite")
            .then(a.cmp(&b))
    });
    let mut seen_pos = 0usize;
    let mut sum = 0.0;
    for (rank0, &i) in order.iter().enumerate() {
        if labels[i] {
            seen_pos += 1;
            sum += seen_pos as f64 / (rank0 + 1) as f64;
        }
    }
    Ok(sum / num_pos as f64)
}

/// How interaction points are proposed from a scored scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Real", deserialize = "S: Real"))]
pub struct ProposalPolicy<S: Real> {
    /// Confidence threshold for adopting a point.
    pub tau: S,
    /// Upper bound on proposals drawn per scene.
    pub max_proposals: usize,
    pub seed: u64,
}

impl<S: Real> ProposalPolicy<S> {
    pub fn new(seed: u64) -> Self {
        Self {
            tau: S::of(0.5),
            max_proposals: 5,
            seed,
        }
    }

    pub fn validated(self) -> Result<Self, MetricsError> {
        let t = self.tau.as_f64();
        if !(t > 0.0 && t < 1.0) {
            return Err(MetricsError::BadPolicy {
                detail: format!("threshold {t} outside (0, 1)"),
            });
        }
        if self.max_proposals == 0 {
            return Err(MetricsError::BadPolicy {
                detail: "max_proposals must be at least 1".into(),
            });
        }
        Ok(self)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmaOutcome {
    pub successes: usize,
    pub proposals: usize,
}

impl SmaOutcome {
    /// Successful fraction of executed proposals.
    pub fn rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.successes as f64 / self.proposals as f64
        }
    }
}

/// Proposal loop shared by the model wrapper and reference scorers: adopt
/// points scoring at least `tau` (top-1 fallback when none do), draw up to
/// `max_proposals` of them without replacement, execute via the ground-truth
/// judge.
pub fn sma_with_scorer<S: Real, F>(
    scenes: &[Scene<S>],
    clouds: &[LabeledCloud<S>],
    action: Action,
    policy: &ProposalPolicy<S>,
    oracle_cfg: &OracleConfig<S>,
    mut scorer: F,
) -> Result<SmaOutcome, MetricsError>
where
    F: FnMut(usize, &LabeledCloud<S>, usize) -> Result<S, MetricsError>,
{
    assert_eq!(scenes.len(), clouds.len(), "scene/cloud tables must pair up");
    let policy = policy.validated()?;
    let mut out = SmaOutcome::default();
    for (si, (scene, cloud)) in scenes.iter().zip(clouds).enumerate() {
        let candidates = cloud.part_point_indices();
        if candidates.is_empty() {
            return Err(MetricsError::EmptyScene { scene: si });
        }
        let scored: Vec<(usize, S)> = candidates
            .iter()
            .map(|&i| scorer(si, cloud, i).map(|s| (i, s)))
            .collect::<Result<_, _>>()?;
        let mut pool: Vec<usize> = scored
            .iter()
            .filter(|(_, s)| *s >= policy.tau)
            .map(|&(i, _)| i)
            .collect();
        if pool.is_empty() {
            let mut best = scored[0];
            for &c in &scored[1..] {
                if c.1 > best.1 {
                    best = c;
                }
            }
            pool.push(best.0);
        }
        let take = policy.max_proposals.min(pool.len());
        let mut rng =
            ChaCha8Rng::seed_from_u64(stream_seed(policy.seed, SEED_PROPOSALS, si as u64));
        for j in 0..take {
            let r = rng.gen_range(j..pool.len());
            pool.swap(j, r);
        }
        for &idx in &pool[..take] {
            let verdict = evaluate(scene, cloud, idx, action, oracle_cfg)?;
            out.proposals += 1;
            if verdict.label {
                out.successes += 1;
            }
        }
    }
    Ok(out)
}

/// Scores every target point with the trained model and executes the adopted
/// proposals. Deterministic per policy seed.
pub fn sample_manipulation_accuracy<S: Real>(
    model: &Model<S>,
    scenes: &[Scene<S>],
    clouds: &[LabeledCloud<S>],
    action: Action,
    policy: &ProposalPolicy<S>,
    oracle_cfg: &OracleConfig<S>,
) -> Result<SmaOutcome, MetricsError> {
    sma_with_scorer(scenes, clouds, action, policy, oracle_cfg, |si, cloud, i| {
        let inp = RecordInputs::build(cloud, scenes[si].robot, i, model.k_significant)?;
        Ok(model.predict(&inp)?)
    })
}

/// Everything one (action, split) evaluation cell produces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub action: Action,
    pub split: Split,
    pub seed: u64,
    pub f_score: f64,
    pub average_precision: f64,
    pub sma: f64,
    pub confusion: Confusion,
    pub proposals: usize,
    pub successes: usize,
}

impl MetricsReport {
    /// Rates must sit in [0,1] and agree with their counts.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let in_unit =
            |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        if !in_unit(self.f_score) || !in_unit(self.average_precision) || !in_unit(self.sma) {
            return Err(MetricsError::BadPolicy {
                detail: "report rate outside [0,1]".into(),
            });
        }
        let sma = SmaOutcome {
            successes: self.successes,
            proposals: self.proposals,
        };
        if (self.confusion.f_score() - self.f_score).abs() > 1e-12
            || (sma.rate() - self.sma).abs() > 1e-12
        {
            return Err(MetricsError::BadPolicy {
                detail: "report rates disagree with counts".into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_scene, sample_cloud, SceneSpec, TRAIN_FAMILIES};

    #[test]
    fn f_score_hand_examples() {
        let preds = [1.0, 1.0, 0.0, 0.0];
        let labels = [true, false, true, false];
        let c = confusion(&preds, &labels, 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), (1, 1, 1, 1));
        assert_eq!(f_score(&preds, &labels, 0.5).unwrap(), 0.5);
        // Perfect predictions.
        assert_eq!(
            f_score(&[0.9, 0.1], &[true, false], 0.5).unwrap(),
            1.0
        );
        // Nothing predicted positive although positives exist.
        assert_eq!(
            f_score(&[0.1, 0.2], &[true, false], 0.5).unwrap(),
            0.0
        );
        assert!(matches!(
            f_score(&[0.5], &[true, false], 0.5),
            Err(MetricsError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn average_precision_hand_examples() {
        assert_eq!(
            average_precision(&[0.9, 0.1], &[true, false]).unwrap(),
            1.0
        );
        assert_eq!(
            average_precision(&[0.1, 0.9], &[true, false]).unwrap(),
            0.5
        );
        assert!(matches!(
            average_precision(&[0.1, 0.9], &[false, false]),
            Err(MetricsError::NoPositives)
        ));
        assert!(matches!(
            average_precision(&[0.5], &[true, false]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    /// Rank each item by counting who beats it; no sorting involved.
    fn reference_average_precision(scores: &[f64], labels: &[bool]) -> f64 {
        let n = scores.len();
        let rank = |i: usize| -> usize {
            let mut ahead = 0;
            for j in 0..n {
                if scores[j] > scores[i] || (scores[j] == scores[i] && j < i) {
                    ahead += 1;
                }
            }
            ahead + 1
        };
        let mut sum = 0.0;
        let mut num_pos = 0;
        for i in 0..n {
            if !labels[i] {
                continue;
            }
            num_pos += 1;
            let r = rank(i);
            let mut pos_at_or_above = 0;
            for j in 0..n {
                if labels[j] && rank(j) <= r {
                    pos_at_or_above += 1;
                }
            }
            sum += pos_at_or_above as f64 / r as f64;
        }
        sum / num_pos as f64
    }

    fn reference_f_score(preds: &[f64], labels: &[bool], tau: f64) -> f64 {
        let tp = preds
            .iter()
            .zip(labels)
            .filter(|(&p, &y)| p >= tau && y)
            .count() as f64;
        let pred_pos = preds.iter().filter(|&&p| p >= tau).count() as f64;
        let real_pos = labels.iter().filter(|&&y| y).count() as f64;
        if pred_pos == 0.0 || real_pos == 0.0 {
            return 0.0;
        }
        let (p, r) = (tp / pred_pos, tp / real_pos);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    #[test]
    fn metrics_match_brute_force_references() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for case in 0..100 {
            let n = rng.gen_range(1..40);
            // Quantized scores force duplicate values to exercise tie-breaks.
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0.0..1.0_f64) * 8.0).round() / 8.0)
                .collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            if !labels.iter().any(|&y| y) {
                labels[rng.gen_range(0..n)] = true;
            }
            let ap = average_precision(&scores, &labels).unwrap();
            let ap_ref = reference_average_precision(&scores, &labels);
            assert!(
                (ap - ap_ref).abs() <= 1e-12,
                "case {case}: ap {ap} vs reference {ap_ref}"
            );
            let f = f_score(&scores, &labels, 0.5).unwrap();
            let f_ref = reference_f_score(&scores, &labels, 0.5);
            assert!((f - f_ref).abs() <= 1e-12, "case {case}: f {f} vs {f_ref}");
        }
    }

    #[test]
    fn policy_rejects_bad_fields() {
        assert!(ProposalPolicy::<f64>::new(1).validated().is_ok());
        let bad_tau = ProposalPolicy {
            tau: 1.0,
            ..ProposalPolicy::new(1)
        };
        assert!(matches!(
            bad_tau.validated(),
            Err(MetricsError::BadPolicy { .. })
        ));
        let none = ProposalPolicy::<f64> {
            max_proposals: 0,
            ..ProposalPolicy::new(1)
        };
        assert!(matches!(
            none.validated(),
            Err(MetricsError::BadPolicy { .. })
        ));
    }

    fn small_scene_set(seed: u64, count: usize) -> (Vec<Scene<f64>>, Vec<LabeledCloud<f64>>) {
        let mut scenes = Vec::new();
        let mut clouds = Vec::new();
        for i in 0..count {
            let spec = SceneSpec::new(
                100 + i as u64,
                stream_seed(seed, 1, i as u64),
                1,
                TRAIN_FAMILIES.to_vec(),
            );
            let scene = generate_scene::<f64>(&spec).unwrap();
            let cloud = sample_cloud(&scene, 600, 160, stream_seed(seed, 2, i as u64)).unwrap();
            scenes.push(scene);
            clouds.push(cloud);
        }
        (scenes, clouds)
    }

    #[test]
    fn oracle_as_scorer_is_perfect_where_success_exists() {
        let cfg = OracleConfig::default();
        let (mut scenes, mut clouds) = small_scene_set(51, 8);
        // Keep only scenes that admit at least one successful push; a scene
        // with no workable point makes every proposal fail by definition.
        let mut i = 0;
        while i < scenes.len() {
            let any = clouds[i].part_point_indices().iter().any(|&p| {
                evaluate(&scenes[i], &clouds[i], p, Action::Push, &cfg)
                    .unwrap()
                    .label
            });
            if any {
                i += 1;
            } else {
                scenes.remove(i);
                clouds.remove(i);
            }
        }
        assert!(scenes.len() >= 2, "fixture starved: no pushable scenes");
        let policy = ProposalPolicy::new(7);
        let scenes_ref = &scenes;
        let out = sma_with_scorer(
            &scenes,
            &clouds,
            Action::Push,
            &policy,
            &cfg,
            |si, cloud, p| {
                let v = evaluate(&scenes_ref[si], cloud, p, Action::Push, &cfg)?;
                Ok(if v.label { 1.0 } else { 0.0 })
            },
        )
        .unwrap();
        assert_eq!(out.successes, out.proposals);
        assert!(out.proposals > 0);
        assert_eq!(out.rate(), 1.0);
    }

    #[test]
    fn model_proposals_are_deterministic() {
        let (scenes, clouds) = small_scene_set(52, 3);
        let model = Model::<f64>::new(3, 12, crate::learn::Ablation::None);
        let policy = ProposalPolicy::new(11);
        let cfg = OracleConfig::default();
        let a = sample_manipulation_accuracy(&model, &scenes, &clouds, Action::Push, &policy, &cfg)
            .unwrap();
        let b = sample_manipulation_accuracy(&model, &scenes, &clouds, Action::Push, &policy, &cfg)
            .unwrap();
        assert_eq!(a, b);
        // Fresh model scores exactly 0.5 everywhere, so every candidate
        // clears the threshold and each scene yields max_proposals draws.
        assert_eq!(a.proposals, policy.max_proposals * scenes.len());
    }

    #[test]
    fn report_validation_checks_count_consistency() {
        let mut report = MetricsReport {
            action: Action::Push,
            split: Split::TestSeen,
            seed: 3,
            f_score: 0.5,
            average_precision: 0.75,
            sma: 0.3,
            confusion: Confusion {
                tp: 1,
                fp: 1,
                fn_: 1,
                tn: 1,
            },
            proposals: 10,
            successes: 3,
        };
        report.validate().unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"fn\":1"));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        report.sma = 0.4;
        assert!(report.validate().is_err());
        report.sma = 2.0;
        assert!(report.validate().is_err());
    }
}
