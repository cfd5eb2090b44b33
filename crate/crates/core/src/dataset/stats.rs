use std::collections::{BTreeMap, HashSet};
use std::io::Write;

use serde::Serialize;

use super::build::{Partition, VEDataset, VEInstance};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartitionSize {
    pub instances: usize,
    pub images: usize,
    /// Distinct hypothesis tokens in this partition.
    pub vocabulary_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LengthSummary {
    pub mean: f64,
    pub median: f64,
    pub mode: usize,
    pub max: usize,
}

/// Hypothesis-length and vocabulary statistics over all partitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub partitions: BTreeMap<&'static str, PartitionSize>,
    pub length: LengthSummary,
    pub vocabulary_size: usize,
    /// token count → number of hypotheses
    pub histogram: BTreeMap<usize, usize>,
}

impl CorpusStats {
    pub fn write_histogram_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "length,count")?;
        for (len, count) in &self.histogram {
            writeln!(w, "{len},{count}")?;
        }
        Ok(())
    }
}

/// Median of a sorted slice; the mean of the two middle values when even.
fn median(sorted: &[usize]) -> f64 {
    match sorted.len() {
        0 => 0.0,
        n if n % 2 == 1 => sorted[n / 2] as f64,
        n => (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0,
    }
}

fn distinct_tokens<'a>(insts: impl Iterator<Item = &'a VEInstance>) -> usize {
    insts
        .flat_map(|i| i.tokens.iter().map(String::as_str))
        .collect::<HashSet<_>>()
        .len()
}

/// Tokens are taken as stored on each instance (already tokenized at
/// build time). Ties for the mode go to the shorter length. An empty
/// dataset yields all-zero statistics.
pub fn compute_stats(ds: &VEDataset) -> CorpusStats {
    let partitions = Partition::ALL
        .iter()
        .map(|&p| {
            (
                p.name(),
                PartitionSize {
                    instances: ds.partition(p).len(),
                    images: ds.image_ids(p).len(),
                    vocabulary_size: distinct_tokens(ds.partition(p).iter()),
                },
            )
        })
        .collect();

    let mut lengths: Vec<usize> = ds.all().map(|i| i.tokens.len()).collect();
    lengths.sort_unstable();
    let mut histogram = BTreeMap::new();
    for &l in &lengths {
        *histogram.entry(l).or_insert(0usize) += 1;
    }
    let mode = histogram
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map_or(0, |(l, _)| *l);
    let total: usize = lengths.iter().sum();
    let length = LengthSummary {
        mean: if lengths.is_empty() {
            0.0
        } else {
            total as f64 / lengths.len() as f64
        },
        median: median(&lengths),
        mode,
        max: lengths.last().copied().unwrap_or(0),
    };
    let vocabulary_size = distinct_tokens(ds.all());

    CorpusStats {
        partitions,
        length,
        vocabulary_size,
        histogram,
    }
}
