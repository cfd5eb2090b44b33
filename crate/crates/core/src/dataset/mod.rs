//! Corpus reconstruction: SNLI records + an image split → image-premise
//! entailment partitions, plus auditing, statistics and batching.

mod audit;
mod batch;
mod build;
mod snli;
mod stats;

pub use audit::{validate_partitions, AuditReport, PartitionAudit, BALANCE_TOLERANCE};
pub use batch::{make_batches, Batch, EVAL_BATCH_SIZE, TRAIN_BATCH_SIZE};
pub use build::{
    build_snli_ve, read_partition, BuildOptions, BuildReport, ImageSplit, MissingImagePolicy, Partition, VEDataset,
    VEInstance,
};
pub use snli::{
    derive_image_id, parse_snli, parse_snli_line, read_snli, Diagnostic, GoldLabel, Label, OnError, SnliRecord,
};
pub use stats::{compute_stats, CorpusStats, LengthSummary, PartitionSize};
