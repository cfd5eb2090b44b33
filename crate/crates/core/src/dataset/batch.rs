use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::build::VEInstance;
use super::snli::Label;
use crate::text::{TokenSeq, Vocabulary};

pub const TRAIN_BATCH_SIZE: usize = 64;
pub const EVAL_BATCH_SIZE: usize = 32;

/// Hypotheses padded to the longest one in the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Positions of the rows in the source partition.
    pub indices: Vec<usize>,
    pub image_ids: Vec<String>,
    pub tokens: Vec<TokenSeq>,
    pub labels: Vec<Label>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn width(&self) -> usize {
        self.tokens.first().map_or(0, TokenSeq::len)
    }
}

/// Splits `partition` into batches of `batch_size` (the last may be
/// short). With `shuffle_seed` the order is a seeded permutation, otherwise
/// partition order is kept. Sentences are never truncated.
pub fn make_batches(
    partition: &[VEInstance],
    vocab: &Vocabulary,
    batch_size: usize,
    shuffle_seed: Option<u64>,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..partition.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk.iter().map(|&i| partition[i].tokens.len()).max().unwrap_or(0);
            Batch {
                indices: chunk.to_vec(),
                image_ids: chunk.iter().map(|&i| partition[i].image_id.clone()).collect(),
                tokens: chunk
                    .iter()
                    .map(|&i| TokenSeq::padded(vocab.encode(&partition[i].tokens), width))
                    .collect(),
                labels: chunk.iter().map(|&i| partition[i].label).collect(),
            }
        })
        .collect()
}
