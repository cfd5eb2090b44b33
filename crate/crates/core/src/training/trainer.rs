use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::{make_batches, Batch, Diagnostic, Label, VEInstance};
use crate::error::{Result, VeError};
use crate::features::FeatureSet;
use crate::models::{forward, predict, save_checkpoint, ModelInput, ModelParams, Prediction, CHECKPOINT_EXTENSION};
use crate::numcore::{Gradients, Graph};
use crate::par::{self, Execution};
use crate::text::{tokenize, TokenSeq, Vocabulary};

use super::metrics::{select_checkpoint, CheckpointRecord, Metrics};
use super::optim::{adam_step, plateau_schedule, AdamState, PlateauState, TrainConfig};

pub type FeatureMap = HashMap<String, FeatureSet>;

/// Everything besides the hypothesis that a model may need per image.
#[derive(Debug, Clone, Copy)]
pub struct DataContext<'a> {
    pub vocab: &'a Vocabulary,
    pub features: Option<&'a FeatureMap>,
    /// Encoded caption premises keyed by image id.
    pub premises: Option<&'a HashMap<String, TokenSeq>>,
}

impl<'a> DataContext<'a> {
    pub fn text_only(vocab: &'a Vocabulary) -> Self {
        Self {
            vocab,
            features: None,
            premises: None,
        }
    }

    fn input<'b>(&'b self, image_id: &str, hypothesis: &'b TokenSeq) -> Result<ModelInput<'b>> {
        let features = match self.features {
            Some(map) => Some(
                map.get(image_id)
                    .ok_or_else(|| VeError::Missing(format!("features for image {image_id:?}")))?,
            ),
            None => None,
        };
        let premise = match self.premises {
            Some(map) => Some(
                map.get(image_id)
                    .ok_or_else(|| VeError::Missing(format!("caption for image {image_id:?}")))?,
            ),
            None => None,
        };
        Ok(ModelInput {
            hypothesis,
            premise,
            features,
        })
    }
}

/// Tokenizes and encodes captions (image id → caption text).
pub fn encode_captions(captions: &HashMap<String, String>, vocab: &Vocabulary) -> HashMap<String, TokenSeq> {
    captions
        .iter()
        .map(|(id, text)| (id.clone(), TokenSeq::new(vocab.encode(&tokenize(text)))))
        .collect()
}

/// Drops instances whose image has no caption, with one diagnostic each.
pub fn keep_captioned(
    partition: &[VEInstance],
    premises: &HashMap<String, TokenSeq>,
) -> (Vec<VEInstance>, Vec<Diagnostic>) {
    let mut kept = Vec::with_capacity(partition.len());
    let mut diags = Vec::new();
    for inst in partition {
        if premises.contains_key(&inst.image_id) {
            kept.push(inst.clone());
        } else {
            diags.push(Diagnostic::general(format!(
                "pair {}: no caption for image {}; skipped",
                inst.pair_id, inst.image_id
            )));
        }
    }
    (kept, diags)
}

/// Mean cross-entropy and mean gradients over one batch. Each instance
/// runs on its own graph; per-instance gradients are summed in batch order
/// so the result does not depend on `exec`.
pub fn batch_gradients(
    params: &ModelParams,
    ctx: &DataContext<'_>,
    batch: &Batch,
    exec: Execution,
) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        return Err(VeError::Contract("empty batch".into()));
    }
    let per_instance = par::map_range(exec, batch.len(), |i| -> Result<(f64, Gradients)> {
        let input = ctx.input(&batch.image_ids[i], &batch.tokens[i])?;
        let mut g = Graph::new();
        let bound = g.bind(&params.store)?;
        let out = forward(&mut g, &bound, params, &input)?;
        let loss = g.cross_entropy(out.logits, &[batch.labels[i].index()])?;
        g.backward(loss)?;
        Ok((g.scalar(loss)?, bound.gradients(&g)))
    });
    let mut total = Gradients::zeros_like(&params.store);
    let mut loss = 0.0;
    for r in per_instance {
        let (l, grads) = r?;
        loss += l;
        total.add_assign(&grads)?;
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Predictions for every instance of `partition`, in partition order.
pub fn predict_partition(
    params: &ModelParams,
    partition: &[VEInstance],
    ctx: &DataContext<'_>,
    batch_size: usize,
    exec: Execution,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(partition.len());
    for batch in make_batches(partition, ctx.vocab, batch_size, None) {
        let preds = par::map_range(exec, batch.len(), |i| {
            let input = ctx.input(&batch.image_ids[i], &batch.tokens[i])?;
            predict(params, &input)
        });
        for p in preds {
            out.push(p?);
        }
    }
    Ok(out)
}

/// Argmax accuracy over a partition. Fails on the first instance whose
/// features or caption cannot be resolved.
pub fn evaluate(
    params: &ModelParams,
    partition: &[VEInstance],
    ctx: &DataContext<'_>,
    batch_size: usize,
    exec: Execution,
) -> Result<Metrics> {
    let preds = predict_partition(params, partition, ctx, batch_size, exec)?;
    Ok(Metrics::from_pairs(partition.iter().zip(&preds).map(|(inst, p)| {
        (inst.label, Label::from_index(p.argmax()).expect("three logits"))
    })))
}

/// One line of the JSONL training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_overall: f64,
    #[serde(rename = "val_C")]
    pub val_c: f64,
    #[serde(rename = "val_N")]
    pub val_n: f64,
    #[serde(rename = "val_E")]
    pub val_e: f64,
    pub checkpoint_path: Option<PathBuf>,
}

#[derive(Default)]
pub struct TrainOptions<'w> {
    pub exec: Execution,
    /// Where checkpoints are written; kept in memory only when `None`.
    pub checkpoint_dir: Option<PathBuf>,
    pub log: Option<&'w mut dyn Write>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    /// Every saved checkpoint, in epoch order.
    pub history: Vec<CheckpointRecord>,
    /// The record chosen by [`select_checkpoint`] and its parameters.
    pub selected: CheckpointRecord,
    pub selected_params: ModelParams,
}

pub fn checkpoint_path(dir: &Path, arch: &str, epoch: usize) -> PathBuf {
    dir.join(format!("{arch}-epoch{epoch:03}.{CHECKPOINT_EXTENSION}"))
}

/// Adam with reduce-on-plateau over `cfg.max_epochs` epochs. A checkpoint
/// is saved whenever overall validation accuracy improves; the returned
/// selection maximizes the lowest per-class validation accuracy among
/// them.
pub fn train(
    params: &mut ModelParams,
    train_set: &[VEInstance],
    val_set: &[VEInstance],
    ctx: &DataContext<'_>,
    cfg: &TrainConfig,
    opts: TrainOptions<'_>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(VeError::Config(
            "training needs non-empty train and val partitions".into(),
        ));
    }
    let TrainOptions {
        exec,
        checkpoint_dir,
        mut log,
    } = opts;
    if let Some(dir) = &checkpoint_dir {
        fs::create_dir_all(dir)?;
    }

    let mut adam = AdamState::new(&params.store);
    let mut schedule = PlateauState::new(cfg.lr);
    let mut best_overall = f64::NEG_INFINITY;
    let mut history: Vec<CheckpointRecord> = Vec::new();
    let mut selected: Option<(CheckpointRecord, ModelParams)> = None;
    let mut entries = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        let lr = schedule.lr;
        let batches = make_batches(
            train_set,
            ctx.vocab,
            cfg.batch_size,
            Some(cfg.seed.wrapping_add(epoch as u64)),
        );
        let mut loss_sum = 0.0;
        for batch in &batches {
            let (loss, grads) = batch_gradients(params, ctx, batch, exec)?;
            if !loss.is_finite() {
                return Err(VeError::Domain(format!("non-finite training loss at epoch {epoch}")));
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut params.store, &grads, &mut adam, lr, cfg)?;
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let metrics = evaluate(params, val_set, ctx, cfg.eval_batch_size, exec)?;
        let overall = metrics.overall();
        let mut saved_path = None;
        if overall > best_overall {
            best_overall = overall;
            if let Some(dir) = &checkpoint_dir {
                let path = checkpoint_path(dir, params.arch.tag(), epoch);
                save_checkpoint(&path, params)?;
                saved_path = Some(path);
            }
            let record = CheckpointRecord {
                epoch,
                metrics,
                path: saved_path.clone(),
            };
            history.push(record.clone());
            if select_checkpoint(&history)?.epoch == epoch {
                selected = Some((record, params.clone()));
            }
        }
        plateau_schedule(&mut schedule, overall, cfg);

        let [c, n, e] = metrics.per_class();
        let entry = EpochLog {
            epoch,
            lr,
            train_loss,
            val_overall: overall,
            val_c: c,
            val_n: n,
            val_e: e,
            checkpoint_path: saved_path,
        };
        if let Some(w) = log.as_mut() {
            serde_json::to_writer(&mut **w, &entry)?;
            writeln!(w)?;
            w.flush()?;
        }
        entries.push(entry);
    }

    let (selected, selected_params) = selected.expect("first epoch always saves");
    Ok(TrainOutcome {
        log: entries,
        history,
        selected,
        selected_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Architecture, ModelDims};
    use crate::numcore::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_set(n: usize, seed: u64) -> (Vec<VEInstance>, Vocabulary) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<String> = (0..10).map(|i| format!("w{i}")).collect();
        let set: Vec<VEInstance> = (0..n)
            .map(|i| VEInstance {
                image_id: format!("img{}", i % 4),
                pair_id: format!("p{i}"),
                tokens: (0..rng.gen_range(2..5))
                    .map(|_| words[rng.gen_range(0..10)].clone())
                    .collect(),
                label: Label::ALL[i % 3],
            })
            .collect();
        let vocab = Vocabulary::build([words.as_slice()]);
        (set, vocab)
    }

    fn features(seed: u64) -> FeatureMap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..4)
            .map(|i| {
                let id = format!("img{i}");
                let fs = FeatureSet::grid(id.clone(), Tensor::uniform(&[4, 6], 1.0, &mut rng), 2).unwrap();
                (id, fs)
            })
            .collect()
    }

    fn dims(vocab: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: 6,
            hidden: 8,
            feat: 6,
            head_hidden: 8,
            rn_hidden: 8,
        }
    }

    #[test]
    fn full_batch_loss_decreases_for_fifty_steps() {
        let (set, vocab) = toy_set(8, 1);
        let feats = features(2);
        let ctx = DataContext {
            vocab: &vocab,
            features: Some(&feats),
            premises: None,
        };
        let mut p = ModelParams::init(Architecture::EveImage, dims(vocab.len()), None, 3).unwrap();
        let cfg = TrainConfig {
            lr: 1e-3,
            ..Default::default()
        };
        let batch = &make_batches(&set, &vocab, 8, None)[0];
        let mut adam = AdamState::new(&p.store);
        let mut prev = f64::INFINITY;
        for step in 0..50 {
            let (loss, grads) = batch_gradients(&p, &ctx, batch, Execution::Sequential).unwrap();
            assert!(loss < prev, "step {step}: {loss} >= {prev}");
            prev = loss;
            adam_step(&mut p.store, &grads, &mut adam, cfg.lr, &cfg).unwrap();
        }
    }

    #[test]
    fn parallel_and_sequential_gradients_are_identical() {
        let (set, vocab) = toy_set(12, 4);
        let feats = features(5);
        let ctx = DataContext {
            vocab: &vocab,
            features: Some(&feats),
            premises: None,
        };
        let p = ModelParams::init(Architecture::TopDown, dims(vocab.len()), None, 3).unwrap();
        let batch = &make_batches(&set, &vocab, 12, Some(1))[0];
        let a = batch_gradients(&p, &ctx, batch, Execution::Sequential).unwrap();
        let b = batch_gradients(&p, &ctx, batch, Execution::Parallel).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn evaluate_ignores_order_and_batch_size() {
        let (set, vocab) = toy_set(20, 6);
        let feats = features(7);
        let ctx = DataContext {
            vocab: &vocab,
            features: Some(&feats),
            premises: None,
        };
        let p = ModelParams::init(Architecture::EveImage, dims(vocab.len()), None, 3).unwrap();
        let m1 = evaluate(&p, &set, &ctx, 1, Execution::Sequential).unwrap();
        let m2 = evaluate(&p, &set, &ctx, 32, Execution::Parallel).unwrap();
        let mut rev = set.clone();
        rev.reverse();
        let m3 = evaluate(&p, &rev, &ctx, 7, Execution::Parallel).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(m1, m3);
    }

    #[test]
    fn missing_features_fail_fast() {
        let (set, vocab) = toy_set(5, 6);
        let mut feats = features(7);
        feats.remove("img3");
        let ctx = DataContext {
            vocab: &vocab,
            features: Some(&feats),
            premises: None,
        };
        let p = ModelParams::init(Architecture::EveImage, dims(vocab.len()), None, 3).unwrap();
        assert!(matches!(
            evaluate(&p, &set, &ctx, 32, Execution::Sequential),
            Err(VeError::Missing(_))
        ));
    }

    #[test]
    fn captions_drive_te_and_missing_ones_are_skipped() {
        let (set, vocab) = toy_set(8, 6);
        let captions: HashMap<String, String> = [("img0", "W1 w2."), ("img1", "w3"), ("img2", "w4 w5")]
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let premises = encode_captions(&captions, &vocab);
        assert_eq!(premises["img0"].ids, vocab.encode(&["w1", "w2"]));
        let (kept, diags) = keep_captioned(&set, &premises);
        assert_eq!(kept.len() + diags.len(), set.len());
        assert!(kept.iter().all(|i| i.image_id != "img3"));
        let ctx = DataContext {
            vocab: &vocab,
            features: None,
            premises: Some(&premises),
        };
        let p = ModelParams::init(Architecture::TextualEntailment, dims(vocab.len()), None, 3).unwrap();
        assert!(evaluate(&p, &kept, &ctx, 4, Execution::Sequential).is_ok());
        assert!(evaluate(&p, &set, &ctx, 4, Execution::Sequential).is_err());
    }

    #[test]
    fn training_writes_log_and_checkpoints_reproducibly() {
        let (set, vocab) = toy_set(18, 8);
        let ctx = DataContext::text_only(&vocab);
        let cfg = TrainConfig {
            lr: 1e-2,
            max_epochs: 4,
            batch_size: 4,
            seed: 11,
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let run = |ckpt: Option<PathBuf>| {
            let mut p = ModelParams::init(Architecture::HypothesisOnly, dims(vocab.len()), None, 3).unwrap();
            let mut log = Vec::new();
            let out = train(
                &mut p,
                &set,
                &set,
                &ctx,
                &cfg,
                TrainOptions {
                    exec: Execution::Parallel,
                    checkpoint_dir: ckpt,
                    log: Some(&mut log),
                },
            )
            .unwrap();
            (p, out, String::from_utf8(log).unwrap())
        };
        let (p1, out1, log1) = run(Some(dir.path().to_path_buf()));
        let (p2, out2, _) = run(None);
        assert_eq!(p1, p2);
        assert_eq!(out1.selected.epoch, out2.selected.epoch);
        assert_eq!(out1.selected_params, out2.selected_params);

        let lines: Vec<serde_json::Value> = log1.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 4);
        for key in [
            "epoch",
            "lr",
            "train_loss",
            "val_overall",
            "val_C",
            "val_N",
            "val_E",
            "checkpoint_path",
        ] {
            assert!(lines[0].get(key).is_some(), "{key}");
        }
        assert!(lines[0]["checkpoint_path"].is_string());
        for r in &out1.history {
            let loaded = crate::models::load_checkpoint(r.path.as_ref().unwrap()).unwrap();
            assert_eq!(loaded.arch, Architecture::HypothesisOnly);
        }
        let epochs: Vec<usize> = out1.history.iter().map(|r| r.epoch).collect();
        assert!(epochs.windows(2).all(|w| w[0] < w[1]));
    }
}
