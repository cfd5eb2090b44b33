//! Optimizer, schedule, metrics and the training loop.

mod metrics;
mod optim;
mod trainer;

pub use metrics::{select_checkpoint, CheckpointRecord, Metrics};
pub use optim::{adam_step, plateau_schedule, AdamState, PlateauState, TrainConfig};
pub use trainer::{
    batch_gradients, checkpoint_path, encode_captions, evaluate, keep_captioned, predict_partition, train, DataContext,
    EpochLog, FeatureMap, TrainOptions, TrainOutcome,
};
