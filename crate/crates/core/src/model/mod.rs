//! The coefficient-to-parameter network, its training loop, checkpoints and
//! end-to-end reconstruction.

mod checkpoint;
mod network;
mod recon;
mod train;

pub use checkpoint::{Checkpoint, TrainingMetadata};
pub use network::{
    build_model, tsmi_to_tensor, ForwardCache, Model, ModelConfig, ParamRef, SeparableBlock,
    HEAD_BIAS_INIT,
};
pub use recon::{
    reconstruct, reconstruct_with_threshold, Reconstruction, DEFAULT_MASK_THRESHOLD,
    MIN_RELAXATION_MS,
};
pub use train::{batch_tensors, evaluate_loss, train, TrainConfig, Trainer};
