//! Classifier architectures and their checkpoints.

mod checkpoint;
mod forward;
mod params;

pub use checkpoint::{
    decode_checkpoint, decode_tensors, encode_checkpoint, encode_tensors, load_checkpoint, save_checkpoint,
    CHECKPOINT_EXTENSION, CHECKPOINT_MAGIC,
};
pub use forward::{
    forward, forward_eve, forward_hypothesis_only, forward_rn, forward_te, forward_topdown, predict, Forward,
    ModelInput, Prediction,
};
pub use params::{Architecture, ModelDims, ModelParams, NUM_CLASSES};
