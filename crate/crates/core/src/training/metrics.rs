use std::path::PathBuf;

use serde::Serialize;

use crate::dataset::Label;
use crate::error::{Result, VeError};

/// Confusion counts indexed `[true][predicted]` in C, N, E order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Metrics {
    pub confusion: [[usize; 3]; 3],
}

impl Metrics {
    pub fn from_pairs<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> Self {
        let mut m = Self::default();
        for (truth, pred) in pairs {
            m.record(truth, pred);
        }
        m
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        self.confusion[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// `trace / total`; 0 when empty.
    pub fn overall(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        (0..3).map(|c| self.confusion[c][c]).sum::<usize>() as f64 / total as f64
    }

    /// Recall of each class; a class with no instances scores 0.
    pub fn per_class(&self) -> [f64; 3] {
        std::array::from_fn(|c| {
            let row: usize = self.confusion[c].iter().sum();
            if row == 0 {
                0.0
            } else {
                self.confusion[c][c] as f64 / row as f64
            }
        })
    }

    pub fn min_per_class(&self) -> f64 {
        self.per_class().into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// One saved checkpoint and the validation metrics it was saved with.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub metrics: Metrics,
    pub path: Option<PathBuf>,
}

/// Picks the record with the highest lowest per-class accuracy; ties go to
/// higher overall accuracy, then the later epoch.
pub fn select_checkpoint(history: &[CheckpointRecord]) -> Result<&CheckpointRecord> {
    let key = |r: &CheckpointRecord| (r.metrics.min_per_class(), r.metrics.overall(), r.epoch);
    history
        .iter()
        .max_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(ka.2.cmp(&kb.2))
        })
        .ok_or_else(|| VeError::Contract("select_checkpoint: empty history".into()))
}
