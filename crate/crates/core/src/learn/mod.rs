//! Affordance model: small fully connected encoders over the robot state,
//! the labeled cloud, and the interaction-field summary, trained on
//! collected interaction records.

pub mod model;
pub mod nn;
pub mod train;

pub use model::{Ablation, Cache, Grads, Model, ModelDims, RecordInputs};
pub use nn::{AdamConfig, AdamState};
pub use train::{
    affordance_loss, load_checkpoint, save_checkpoint, train, triplet_loss, triplet_loss_grads,
    write_loss_curve, CurvePoint, TrainConfig, TrainResult,
};

#[derive(Debug, thiserror::Error)]
pub enum LearnError {
    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },
    #[error("point index {index} is not a usable target")]
    InvalidPoint { index: usize },
    #[error("non-finite loss or gradient at step {step}")]
    NonFiniteGradient { step: u64 },
    #[error("no triples for the requested action")]
    EmptyTrainingSet,
}
