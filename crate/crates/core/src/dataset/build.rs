use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::snli::{derive_image_id, Diagnostic, Label, SnliRecord};
use crate::error::{Result, VeError};
use crate::par::{self, Execution};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Val, Partition::Test];

    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == s)
    }
}

/// Image ids per partition, as published alongside the source corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImageSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl ImageSplit {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn list(&self, p: Partition) -> &[String] {
        match p {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    /// Image → partition. An image listed in two partitions is an error.
    pub fn assignments(&self) -> Result<HashMap<&str, Partition>> {
        let mut map = HashMap::new();
        for p in Partition::ALL {
            for id in self.list(p) {
                if let Some(prev) = map.insert(id.as_str(), p) {
                    if prev != p {
                        return Err(VeError::Config(format!(
                            "image {id:?} assigned to both {} and {}",
                            prev.name(),
                            p.name()
                        )));
                    }
                }
            }
        }
        Ok(map)
    }

    /// Seeded random disjoint split, for fixtures. Sizes are fractions of
    /// the sorted, de-duplicated image list; test takes the remainder.
    pub fn random<S: AsRef<str>>(images: &[S], train_frac: f64, val_frac: f64, seed: u64) -> Self {
        let mut ids: Vec<String> = images
            .iter()
            .map(|s| s.as_ref().to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = ids.len();
        let n_train = (((n as f64) * train_frac).round() as usize).min(n);
        let n_val = (((n as f64) * val_frac).round() as usize).min(n - n_train);
        let test = ids.split_off(n_train + n_val);
        let val = ids.split_off(n_train);
        Self { train: ids, val, test }
    }
}

/// One (image premise, hypothesis, label) triple.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VEInstance {
    pub image_id: String,
    pub pair_id: String,
    pub tokens: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VEDataset {
    pub train: Vec<VEInstance>,
    pub val: Vec<VEInstance>,
    pub test: Vec<VEInstance>,
}

impl VEDataset {
    pub fn partition(&self, p: Partition) -> &[VEInstance] {
        match p {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    pub fn partition_mut(&mut self, p: Partition) -> &mut Vec<VEInstance> {
        match p {
            Partition::Train => &mut self.train,
            Partition::Val => &mut self.val,
            Partition::Test => &mut self.test,
        }
    }

    pub fn image_ids(&self, p: Partition) -> BTreeSet<&str> {
        self.partition(p).iter().map(|i| i.image_id.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> impl Iterator<Item = &VEInstance> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for p in Partition::ALL {
            let mut w = BufWriter::new(File::create(dir.join(format!("{}.jsonl", p.name())))?);
            for inst in self.partition(p) {
                serde_json::to_writer(&mut w, inst)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Reads the three partition files; a missing file is an empty partition.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(VeError::Missing(format!("dataset directory {}", dir.display())));
        }
        let mut ds = Self::default();
        for p in Partition::ALL {
            let path = dir.join(format!("{}.jsonl", p.name()));
            if path.exists() {
                *ds.partition_mut(p) = read_partition(BufReader::new(File::open(&path)?))?;
            }
        }
        Ok(ds)
    }
}

pub fn read_partition<R: BufRead>(reader: R) -> Result<Vec<VEInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| VeError::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingImagePolicy {
    #[default]
    Drop,
    Abort,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub missing_image: MissingImagePolicy,
    pub exec: Execution,
}

#[derive(Debug, Clone, Default)]
pub struct BuildReport {
    pub dataset: VEDataset,
    pub diagnostics: Vec<Diagnostic>,
    pub dropped_no_consensus: usize,
    pub dropped_unsplit: usize,
    pub duplicates: usize,
}

/// Replaces each consensus-labelled text premise by its image and files the
/// instance under that image's partition. Records without consensus ("-")
/// are dropped. Within a partition instances are sorted by image id, then
/// pair id.
pub fn build_snli_ve(records: &[SnliRecord], split: &ImageSplit, opts: BuildOptions) -> Result<BuildReport> {
    let assign = split.assignments()?;
    let mut report = BuildReport::default();
    let mut seen_pairs = HashSet::new();

    let tokenized = par::map(opts.exec, records, |r| tokenize(&r.hypothesis));

    for (rec, tokens) in records.iter().zip(tokenized) {
        let Some(label) = rec.gold_label else {
            report.dropped_no_consensus += 1;
            continue;
        };
        let (image_id, warning) = derive_image_id(&rec.caption_id);
        if let Some(w) = warning {
            report.diagnostics.push(Diagnostic::at(rec.line, w));
        }
        let Some(&part) = assign.get(image_id.as_str()) else {
            match opts.missing_image {
                MissingImagePolicy::Abort => {
                    return Err(VeError::Missing(format!(
                        "line {}: image {image_id:?} is not in the split file",
                        rec.line
                    )))
                }
                MissingImagePolicy::Drop => {
                    report.dropped_unsplit += 1;
                    report.diagnostics.push(Diagnostic::at(
                        rec.line,
                        format!("image {image_id:?} not in split; dropped"),
                    ));
                    continue;
                }
            }
        };
        if !seen_pairs.insert(rec.pair_id.clone()) {
            report.duplicates += 1;
            report.diagnostics.push(Diagnostic::at(
                rec.line,
                format!("duplicate pair id {:?}; keeping the first", rec.pair_id),
            ));
            continue;
        }
        report.dataset.partition_mut(part).push(VEInstance {
            image_id,
            pair_id: rec.pair_id.clone(),
            tokens,
            label,
        });
    }

    for p in Partition::ALL {
        report
            .dataset
            .partition_mut(p)
            .sort_by(|a, b| (&a.image_id, &a.pair_id).cmp(&(&b.image_id, &b.pair_id)));
    }
    if report.dataset.is_empty() {
        report
            .diagnostics
            .push(Diagnostic::general("no instances survived filtering; dataset is empty"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(label: Option<Label>, image: &str, n: usize, pair: &str) -> SnliRecord {
        SnliRecord {
            gold_label: label,
            premise: "p".into(),
            hypothesis: "A dog runs.".into(),
            caption_id: format!("{image}#{n}"),
            pair_id: pair.into(),
            line: 1,
        }
    }

    #[test]
    fn six_images_split_four_one_one() {
        let images = ["a.jpg", "b.jpg", "c.jpg", "d.jpg", "e.jpg", "f.jpg"];
        let mut records = Vec::new();
        for (i, img) in images.iter().enumerate() {
            for (j, l) in Label::ALL.iter().enumerate() {
                records.push(rec(Some(*l), img, j, &format!("{i}{j}")));
            }
        }
        let split = ImageSplit {
            train: images[..4].iter().map(|s| s.to_string()).collect(),
            val: vec!["e.jpg".into()],
            test: vec!["f.jpg".into()],
        };
        let out = build_snli_ve(&records, &split, BuildOptions::default()).unwrap();
        assert_eq!(out.dataset.train.len(), 12);
        assert_eq!(out.dataset.val.len(), 3);
        assert_eq!(out.dataset.test.len(), 3);
        assert!(out
            .dataset
            .image_ids(Partition::Train)
            .is_disjoint(&out.dataset.image_ids(Partition::Test)));
        assert_eq!(out.dataset.train[0].tokens, ["a", "dog", "runs"]);
    }

    #[test]
    fn all_no_consensus_gives_empty_dataset() {
        let records = vec![rec(None, "a.jpg", 0, "1"), rec(None, "a.jpg", 1, "2")];
        let split = ImageSplit {
            train: vec!["a.jpg".into()],
            ..Default::default()
        };
        let out = build_snli_ve(&records, &split, BuildOptions::default()).unwrap();
        assert!(out.dataset.is_empty());
        assert_eq!(out.dropped_no_consensus, 2);
        assert!(!out.diagnostics.is_empty());
    }

    #[test]
    fn missing_images_and_duplicates() {
        let records = vec![
            rec(Some(Label::Neutral), "a.jpg", 0, "1"),
            rec(Some(Label::Neutral), "a.jpg", 0, "1"),
            rec(Some(Label::Neutral), "zz.jpg", 0, "2"),
        ];
        let split = ImageSplit {
            train: vec!["a.jpg".into()],
            ..Default::default()
        };
        let out = build_snli_ve(&records, &split, BuildOptions::default()).unwrap();
        assert_eq!(out.dataset.train.len(), 1);
        assert_eq!((out.duplicates, out.dropped_unsplit), (1, 1));
        let strict = BuildOptions {
            missing_image: MissingImagePolicy::Abort,
            ..Default::default()
        };
        assert!(build_snli_ve(&records, &split, strict).is_err());
    }

    #[test]
    fn split_rejects_double_assignment() {
        let split = ImageSplit {
            train: vec!["a".into()],
            val: vec![],
            test: vec!["a".into()],
        };
        assert!(split.assignments().is_err());
    }

    #[test]
    fn random_split_is_disjoint_and_seeded() {
        let ids: Vec<String> = (0..20).map(|i| format!("{i}.jpg")).collect();
        let a = ImageSplit::random(&ids, 0.6, 0.2, 5);
        assert_eq!(a, ImageSplit::random(&ids, 0.6, 0.2, 5));
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (12, 4, 4));
        assert!(a.assignments().is_ok());
    }
}
