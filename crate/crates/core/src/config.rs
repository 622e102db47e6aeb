//! Versioned run configuration: one TOML file drives every pipeline stage,
//! with command-line flags layered on top by the front end.

use crate::dataset::ClassCounts;
use crate::learn::Ablation;
use crate::oracle::Action;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config does not parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config version {found} unsupported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("{path}: {detail}")]
    Field { path: String, detail: String },
}

/// Ablation switch in the flag grammar shared by config files and the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AblationChoice {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "no-of")]
    NoField,
    #[serde(rename = "no-cl")]
    NoContrastive,
}

impl AblationChoice {
    pub fn to_ablation(self) -> Ablation {
        match self {
            AblationChoice::None => Ablation::None,
            AblationChoice::NoField => Ablation::NoField,
            AblationChoice::NoContrastive => Ablation::NoContrastive,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyChoice {
    #[serde(rename = "train")]
    Train,
    #[serde(rename = "novel")]
    Novel,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub count: usize,
    pub occluders: u32,
    pub seed: u64,
    pub families: FamilyChoice,
}

impl Default for SceneSection {
    fn default() -> Self {
        Self {
            count: 8,
            occluders: 1,
            seed: 7,
            families: FamilyChoice::Train,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloudSection {
    /// Surface samples drawn before downsampling.
    pub n_raw: usize,
    /// Cloud size after furthest-point downsampling.
    pub n_out: usize,
}

impl Default for CloudSection {
    fn default() -> Self {
        Self {
            n_raw: 768,
            n_out: 192,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    pub seed: u64,
    pub scenes: usize,
    pub push_success: usize,
    pub push_failure: usize,
    pub pull_success: usize,
    pub pull_failure: usize,
}

impl Default for DatasetSection {
    fn default() -> Self {
        let q = ClassCounts::desk_default();
        Self {
            seed: 11,
            scenes: 200,
            push_success: q.push_success,
            push_failure: q.push_failure,
            pull_success: q.pull_success,
            pull_failure: q.pull_failure,
        }
    }
}

impl DatasetSection {
    pub fn quotas(&self) -> ClassCounts {
        ClassCounts {
            push_success: self.push_success,
            push_failure: self.push_failure,
            pull_success: self.pull_success,
            pull_failure: self.pull_failure,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: u64,
    pub action: Action,
    pub ablation: AblationChoice,
    pub epochs: usize,
    pub batch_triplets: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub lambda_cl: f64,
    pub k_significant: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            seed: 11,
            action: Action::Push,
            ablation: AblationChoice::None,
            epochs: 80,
            batch_triplets: 10,
            learning_rate: 0.001,
            alpha: 2.0,
            lambda_cl: 1.0,
            k_significant: 64,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub seed: u64,
    pub test_scenes: usize,
    pub tau: f64,
    pub max_proposals: usize,
    pub policy_seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            seed: 11,
            test_scenes: 100,
            tau: 0.5,
            max_proposals: 5,
            policy_seed: 17,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub version: u32,
    pub scene: SceneSection,
    pub cloud: CloudSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            scene: SceneSection::default(),
            cloud: CloudSection::default(),
            dataset: DatasetSection::default(),
            train: TrainSection::default(),
            eval: EvalSection::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |path: &str, detail: &str| {
            Err(ConfigError::Field {
                path: path.into(),
                detail: detail.into(),
            })
        };
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version {
                found: self.version,
                expected: CONFIG_VERSION,
            });
        }
        if self.scene.count == 0 {
            return field("scene.count", "must be at least 1");
        }
        if self.scene.occluders == 0 {
            return field("scene.occluders", "must be at least 1");
        }
        if self.cloud.n_out == 0 {
            return field("cloud.n_out", "must be at least 1");
        }
        if self.cloud.n_out > self.cloud.n_raw {
            return field("cloud.n_out", "cannot exceed cloud.n_raw");
        }
        if self.dataset.scenes == 0 {
            return field("dataset.scenes", "must be at least 1");
        }
        if self.dataset.quotas().total() == 0 {
            return field("dataset", "at least one class quota must be positive");
        }
        if self.train.epochs == 0 {
            return field("train.epochs", "must be at least 1");
        }
        if self.train.batch_triplets == 0 {
            return field("train.batch_triplets", "must be at least 1");
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate > 0.0) {
            return field("train.learning_rate", "must be positive and finite");
        }
        if !(self.train.alpha.is_finite() && self.train.alpha >= 0.0) {
            return field("train.alpha", "must be nonnegative and finite");
        }
        if !(self.train.lambda_cl.is_finite() && self.train.lambda_cl >= 0.0) {
            return field("train.lambda_cl", "must be nonnegative and finite");
        }
        if self.train.k_significant == 0 {
            return field("train.k_significant", "must be at least 1");
        }
        if self.eval.test_scenes == 0 {
            return field("eval.test_scenes", "must be at least 1");
        }
        if !(self.eval.tau > 0.0 && self.eval.tau < 1.0) {
            return field("eval.tau", "must lie strictly between 0 and 1");
        }
        if self.eval.max_proposals == 0 {
            return field("eval.max_proposals", "must be at least 1");
        }
        Ok(())
    }

    /// 64-bit FNV-1a over the canonical serialized form; stable across runs
    /// and platforms, used in provenance headers.
    pub fn content_hash(&self) -> u64 {
        let text = toml::to_string(self).expect("config serializes");
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
}
