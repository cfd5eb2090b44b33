use std::collections::BTreeMap;

use serde::Serialize;

use super::build::{Partition, VEDataset};
use super::snli::Label;

/// Largest allowed `max/min − 1` over class counts within a partition.
pub const BALANCE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionAudit {
    pub instances: usize,
    pub images: usize,
    /// Counts keyed C, N, E.
    pub class_counts: BTreeMap<&'static str, usize>,
    /// `max/min − 1` over the three class counts; `None` if a class is absent.
    pub class_spread: Option<f64>,
    pub balanced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    /// Shared image ids keyed `"train/val"`, `"train/test"`, `"val/test"`.
    pub overlaps: BTreeMap<String, Vec<String>>,
    pub partitions: BTreeMap<&'static str, PartitionAudit>,
    pub disjoint: bool,
    /// Informational; balance is reported, not enforced.
    pub balanced: bool,
    pub passed: bool,
}

impl AuditReport {
    pub fn offending_images(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.overlaps.values().flatten().map(String::as_str).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// Checks that no image appears in two partitions and reports per-class
/// balance. Only overlap fails the audit.
pub fn validate_partitions(ds: &VEDataset) -> AuditReport {
    let mut overlaps = BTreeMap::new();
    let pairs = [
        (Partition::Train, Partition::Val),
        (Partition::Train, Partition::Test),
        (Partition::Val, Partition::Test),
    ];
    for (a, b) in pairs {
        let ia = ds.image_ids(a);
        let ib = ds.image_ids(b);
        let shared: Vec<String> = ia.intersection(&ib).map(|s| s.to_string()).collect();
        overlaps.insert(format!("{}/{}", a.name(), b.name()), shared);
    }
    let disjoint = overlaps.values().all(Vec::is_empty);

    let mut partitions = BTreeMap::new();
    for p in Partition::ALL {
        let insts = ds.partition(p);
        let mut counts = [0usize; 3];
        for i in insts {
            counts[i.label.index()] += 1;
        }
        let min = *counts.iter().min().unwrap();
        let max = *counts.iter().max().unwrap();
        let class_spread = (min > 0).then(|| max as f64 / min as f64 - 1.0);
        let balanced = insts.is_empty() || class_spread.is_some_and(|s| s < BALANCE_TOLERANCE);
        partitions.insert(
            p.name(),
            PartitionAudit {
                instances: insts.len(),
                images: ds.image_ids(p).len(),
                class_counts: Label::ALL.iter().map(|l| (l.short(), counts[l.index()])).collect(),
                class_spread,
                balanced,
            },
        );
    }
    let balanced = partitions.values().all(|p| p.balanced);
    AuditReport {
        overlaps,
        partitions,
        disjoint,
        balanced,
        passed: disjoint,
    }
}
