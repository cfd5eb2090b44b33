use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocabulary, PAD};
use crate::error::{Result, VeError};
use crate::numcore::Tensor;

/// Init range for rows not found in the embedding file.
pub const OOV_INIT_LIMIT: f64 = 0.05;

/// `|V| × dim` word vectors. Row [`PAD`] is always zero.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub matrix: Tensor,
    pub trainable: bool,
    /// Fraction of non-special vocabulary entries found in the source file.
    pub coverage: f64,
}

impl EmbeddingTable {
    /// Every row drawn from U(-0.05, 0.05) except the zero PAD row.
    pub fn random(vocab: &Vocabulary, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut matrix = Tensor::uniform(&[vocab.len(), dim], OOV_INIT_LIMIT, &mut rng);
        matrix.data_mut()[PAD * dim..(PAD + 1) * dim].fill(0.0);
        Self {
            matrix,
            trainable: false,
            coverage: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }
}

/// Loads whitespace-separated `token v1 … v_dim` lines for the tokens in
/// `vocab`. Rows missing from the file keep their seeded random init.
///
/// A file whose first line has a different width than `dim + 1` is a
/// configuration error (wrong embedding size); any later line of the wrong
/// width or with an unparsable number is a parse error naming the line.
pub fn load_embeddings<R: BufRead>(reader: R, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::random(vocab, dim, seed);
    let mut found = vec![false; vocab.len()];
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != dim + 1 {
            if lineno == 1 {
                return Err(VeError::Config(format!(
                    "embedding file has dimension {}, expected {dim}",
                    fields.len().saturating_sub(1)
                )));
            }
            return Err(VeError::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", dim + 1, fields.len()),
            });
        }
        let Some(idx) = vocab.lookup(fields[0]) else { continue };
        if idx == PAD || found[idx] {
            continue;
        }
        let row = &mut table.matrix.data_mut()[idx * dim..(idx + 1) * dim];
        for (slot, text) in row.iter_mut().zip(&fields[1..]) {
            *slot = text.parse().map_err(|e| VeError::Parse {
                line: lineno,
                msg: format!("bad number {text:?}: {e}"),
            })?;
        }
        found[idx] = true;
    }
    let regular = vocab.len().saturating_sub(2);
    let hits = found.iter().skip(2).filter(|f| **f).count();
    table.coverage = if regular == 0 {
        0.0
    } else {
        hits as f64 / regular as f64
    };
    Ok(table)
}

pub fn load_embeddings_file(path: &Path, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    load_embeddings(BufReader::new(File::open(path)?), vocab, dim, seed)
}
