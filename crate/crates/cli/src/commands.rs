use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use vekit::dataset::{
    build_snli_ve, compute_stats, read_snli, validate_partitions, BuildOptions, CorpusStats, ImageSplit,
    MissingImagePolicy, OnError, Partition, VEDataset, VEInstance,
};
use vekit::features::{read_feature_file, FeatureStore};
use vekit::models::{load_checkpoint, Architecture, ModelDims, ModelParams};
use vekit::par::Execution;
use vekit::text::{load_embeddings_file, tokenize, TokenSeq, Vocabulary};
use vekit::training::{
    encode_captions, keep_captioned, predict_partition, train as train_model, DataContext, FeatureMap, TrainConfig,
    TrainOptions,
};
use vekit::viz::{attention_map, write_attention};
use vekit::VeError;

use crate::config::Resolver;
use crate::{AuditArgs, BuildArgs, CliError, EvalArgs, StatsArgs, TrainArgs, VisualizeArgs};

pub const VOCAB_FILE: &str = "vocab.txt";
pub const BEST_CHECKPOINT: &str = "best.vec";

type CliResult<T = ()> = Result<T, CliError>;
type Premises = HashMap<String, TokenSeq>;

fn echo(command: &str, r: &Resolver) {
    eprint!("# ve-kit {command} resolved config\n{}", r.echo());
}

fn execution(sequential: bool) -> Execution {
    if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn print_json(v: &Value) -> CliResult {
    println!("{}", serde_json::to_string_pretty(v).map_err(VeError::from)?);
    Ok(())
}

fn write_json(path: &Path, v: &Value) -> CliResult {
    let mut text = serde_json::to_string_pretty(v).map_err(VeError::from)?;
    text.push('\n');
    fs::write(path, text).map_err(VeError::from)?;
    Ok(())
}

fn read_vocab(path: &Path) -> CliResult<Vocabulary> {
    let file = File::open(path).map_err(|e| VeError::Missing(format!("vocabulary {}: {e}", path.display())))?;
    Ok(Vocabulary::read_from(BufReader::new(file))?)
}

fn write_vocab(path: &Path, vocab: &Vocabulary) -> CliResult {
    let mut w = BufWriter::new(File::create(path).map_err(VeError::from)?);
    vocab.write_to(&mut w)?;
    w.flush().map_err(VeError::from)?;
    Ok(())
}

/// The vocabulary stored next to a checkpoint unless given explicitly.
fn checkpoint_vocab(checkpoint: &Path, explicit: Option<&str>) -> CliResult<Vocabulary> {
    match explicit {
        Some(p) => read_vocab(Path::new(p)),
        None => read_vocab(&checkpoint.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE)),
    }
}

fn read_captions(path: &str) -> CliResult<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(VeError::from)?;
    Ok(serde_json::from_str(&text).map_err(VeError::from)?)
}

fn parse_partition(s: &str) -> CliResult<Partition> {
    Partition::parse(s).ok_or_else(|| CliError::Usage(format!("unknown partition {s:?}; expected train, val or test")))
}

/// Loads features for every image in `sets` when the architecture uses
/// them.
fn load_features(
    arch: Architecture,
    dir: Option<&str>,
    sets: &[&[VEInstance]],
    exec: Execution,
) -> CliResult<Option<FeatureMap>> {
    if arch.feature_kind().is_none() {
        if dir.is_some() {
            eprintln!("note: {arch} is text-only; --features is ignored");
        }
        return Ok(None);
    }
    let dir = dir.ok_or_else(|| CliError::Usage(format!("{arch} needs --features")))?;
    let ids = sets.iter().flat_map(|s| s.iter().map(|i| i.image_id.as_str()));
    Ok(Some(FeatureStore::new(dir).load_all(ids, exec)?))
}

/// For architectures that read captions: the encoded premises and each
/// set filtered to captioned images.
fn attach_captions(
    arch: Architecture,
    captions: Option<&HashMap<String, String>>,
    vocab: &Vocabulary,
    sets: Vec<Vec<VEInstance>>,
) -> CliResult<(Option<Premises>, Vec<Vec<VEInstance>>)> {
    if !arch.needs_premise() {
        if captions.is_some() {
            eprintln!("note: {arch} does not read captions; --captions is ignored");
        }
        return Ok((None, sets));
    }
    let captions = captions.ok_or_else(|| CliError::Usage(format!("{arch} needs --captions")))?;
    let premises = encode_captions(captions, vocab);
    let mut kept = Vec::with_capacity(sets.len());
    for set in sets {
        let (k, diags) = keep_captioned(&set, &premises);
        for d in diags {
            eprintln!("warning: {d}");
        }
        kept.push(k);
    }
    Ok((Some(premises), kept))
}

pub fn build_dataset(a: BuildArgs, r: &mut Resolver) -> CliResult {
    let snli = r.list("snli", a.snli)?;
    let split = r.required::<String>("split", a.split)?;
    let out = r.required::<String>("out", a.out)?;
    let on_error = match r.or("on-error", a.on_error, "abort".to_string())?.as_str() {
        "abort" => OnError::Abort,
        "continue" => OnError::Continue,
        other => {
            return Err(CliError::Usage(format!(
                "--on-error must be abort or continue, got {other:?}"
            )))
        }
    };
    let missing_image = match r.or("missing-image", a.missing_image, "drop".to_string())?.as_str() {
        "drop" => MissingImagePolicy::Drop,
        "abort" => MissingImagePolicy::Abort,
        other => {
            return Err(CliError::Usage(format!(
                "--missing-image must be drop or abort, got {other:?}"
            )))
        }
    };
    let exec = execution(r.switch("sequential", a.sequential)?);
    echo("build-dataset", r);
    if snli.is_empty() {
        return Err(CliError::Usage("--snli is required (flag or config key)".into()));
    }

    let mut records = Vec::new();
    let mut read_diags = 0;
    for path in &snli {
        let file = File::open(path).map_err(|e| VeError::Missing(format!("{path}: {e}")))?;
        let (recs, diags) = read_snli(BufReader::new(file), on_error)?;
        for d in &diags {
            eprintln!("warning: {path}: {d}");
        }
        read_diags += diags.len();
        records.extend(recs);
    }
    let split = ImageSplit::read(Path::new(&split))?;
    if let Err(e) = split.assignments() {
        return Err(CliError::Validation(format!("split file: {e}")));
    }
    let report = build_snli_ve(&records, &split, BuildOptions { missing_image, exec })?;
    for d in &report.diagnostics {
        eprintln!("warning: {d}");
    }
    report.dataset.write_dir(Path::new(&out))?;

    let audit = validate_partitions(&report.dataset);
    let mut sizes = serde_json::Map::new();
    for p in Partition::ALL {
        sizes.insert(p.name().into(), json!(report.dataset.partition(p).len()));
    }
    print_json(&json!({
        "out": out,
        "records": records.len(),
        "instances": sizes,
        "dropped_no_consensus": report.dropped_no_consensus,
        "dropped_unsplit": report.dropped_unsplit,
        "duplicates": report.duplicates,
        "skipped_lines": read_diags,
        "disjoint": audit.disjoint,
    }))?;
    if !audit.passed {
        return Err(CliError::Validation(format!(
            "partitions share images: {}",
            audit.offending_images().join(", ")
        )));
    }
    Ok(())
}

pub fn audit(a: AuditArgs, r: &mut Resolver) -> CliResult {
    let dataset = r.required::<String>("dataset", a.dataset)?;
    let out = r.optional::<String>("out", a.out)?;
    echo("audit", r);
    let ds = VEDataset::read_dir(Path::new(&dataset))?;
    let report = validate_partitions(&ds);
    let value = serde_json::to_value(&report).map_err(VeError::from)?;
    if let Some(out) = out {
        write_json(Path::new(&out), &value)?;
    }
    print_json(&value)?;
    for (name, p) in &report.partitions {
        if !p.balanced {
            eprintln!("note: {name} class counts are unbalanced: {:?}", p.class_counts);
        }
    }
    if !report.passed {
        return Err(CliError::Validation(format!(
            "images shared between partitions: {}",
            report.offending_images().join(", ")
        )));
    }
    Ok(())
}

fn stats_text(s: &CorpusStats) -> String {
    let mut t = format!(
        "{:<10} {:>10} {:>8} {:>10}\n",
        "partition", "instances", "images", "vocabulary"
    );
    for (name, p) in &s.partitions {
        t += &format!(
            "{name:<10} {:>10} {:>8} {:>10}\n",
            p.instances, p.images, p.vocabulary_size
        );
    }
    t += &format!("vocabulary size: {}\n", s.vocabulary_size);
    t += &format!(
        "hypothesis length: mean {:.2}, median {}, mode {}, max {}\n",
        s.length.mean, s.length.median, s.length.mode, s.length.max
    );
    t
}

pub fn stats(a: StatsArgs, r: &mut Resolver) -> CliResult {
    let dataset = r.required::<String>("dataset", a.dataset)?;
    let format = r.or("format", a.format, "text".to_string())?;
    let histogram = r.optional::<String>("histogram", a.histogram)?;
    echo("stats", r);
    if format != "json" && format != "text" {
        return Err(CliError::Usage(format!(
            "--format must be json or text, got {format:?}"
        )));
    }
    let stats = compute_stats(&VEDataset::read_dir(Path::new(&dataset))?);
    if let Some(path) = histogram {
        let mut w = BufWriter::new(File::create(&path).map_err(VeError::from)?);
        stats.write_histogram_csv(&mut w)?;
        w.flush().map_err(VeError::from)?;
    }
    if format == "json" {
        print_json(&serde_json::to_value(&stats).map_err(VeError::from)?)
    } else {
        print!("{}", stats_text(&stats));
        Ok(())
    }
}

fn metrics_json(m: &vekit::training::Metrics) -> Value {
    let [c, n, e] = m.per_class();
    json!({
        "instances": m.total(),
        "overall": m.overall(),
        "per_class": { "C": c, "N": n, "E": e },
        "min_per_class": m.min_per_class(),
        "confusion": m.confusion,
    })
}

pub fn train(a: TrainArgs, r: &mut Resolver) -> CliResult {
    let dataset = r.required::<String>("dataset", a.dataset)?;
    let arch: Architecture = r
        .required("arch", a.arch)?
        .parse()
        .map_err(|e: VeError| CliError::Usage(e.to_string()))?;
    let out = PathBuf::from(r.required::<String>("out", a.out)?);
    let features = r.optional::<String>("features", a.features)?;
    let captions = r.optional::<String>("captions", a.captions)?;
    let embeddings = r.optional::<String>("embeddings", a.embeddings)?;
    let d = ModelDims::default();
    let embed = r.or("embed-dim", a.embed_dim, d.embed)?;
    let hidden = r.or("hidden", a.hidden, d.hidden)?;
    let head_hidden = r.or("head-hidden", a.head_hidden, d.head_hidden)?;
    let rn_hidden = r.or("rn-hidden", a.rn_hidden, d.rn_hidden)?;
    let c = TrainConfig::default();
    let cfg = TrainConfig {
        max_epochs: r.or("epochs", a.epochs, c.max_epochs)?,
        lr: r.or("lr", a.lr, c.lr)?,
        weight_decay: r.or("weight-decay", a.weight_decay, c.weight_decay)?,
        batch_size: r.or("batch-size", a.batch_size, c.batch_size)?,
        eval_batch_size: r.or("eval-batch-size", a.eval_batch_size, c.eval_batch_size)?,
        patience: r.or("patience", a.patience, c.patience)?,
        lr_factor: r.or("lr-factor", a.lr_factor, c.lr_factor)?,
        lr_floor: r.or("lr-floor", a.lr_floor, c.lr_floor)?,
        seed: r.or("seed", a.seed, c.seed)?,
        ..c
    };
    let exec = execution(r.switch("sequential", a.sequential)?);
    echo("train", r);
    cfg.validate()?;

    let ds = VEDataset::read_dir(Path::new(&dataset))?;
    let captions = captions.as_deref().map(read_captions).transpose()?;

    let caption_tokens: Vec<Vec<String>> = match (&captions, arch.needs_premise()) {
        (Some(map), true) => {
            let train_images = ds.image_ids(Partition::Train);
            let mut ids: Vec<&String> = map.keys().filter(|k| train_images.contains(k.as_str())).collect();
            ids.sort();
            ids.into_iter().map(|id| tokenize(&map[id])).collect()
        }
        _ => Vec::new(),
    };
    let vocab = Vocabulary::build(
        ds.train
            .iter()
            .map(|i| i.tokens.as_slice())
            .chain(caption_tokens.iter().map(Vec::as_slice)),
    );

    let (premises, sets) = attach_captions(arch, captions.as_ref(), &vocab, vec![ds.train, ds.val])?;
    let [train_set, val_set]: [Vec<VEInstance>; 2] = sets.try_into().expect("two sets");
    let features = load_features(arch, features.as_deref(), &[&train_set, &val_set], exec)?;
    let feat = match &features {
        Some(map) => map.values().next().map_or(d.feat, |fs| fs.feat_dim()),
        None => d.feat,
    };
    let dims = ModelDims {
        vocab: vocab.len(),
        embed,
        hidden,
        feat,
        head_hidden,
        rn_hidden,
    };
    let table = embeddings
        .as_deref()
        .map(|p| load_embeddings_file(Path::new(p), &vocab, embed, cfg.seed))
        .transpose()?;
    let mut params = ModelParams::init(arch, dims, table.as_ref(), cfg.seed)?;

    let ckpt_dir = out.join("checkpoints");
    fs::create_dir_all(&ckpt_dir).map_err(VeError::from)?;
    write_vocab(&out.join(VOCAB_FILE), &vocab)?;
    write_vocab(&ckpt_dir.join(VOCAB_FILE), &vocab)?;
    fs::write(out.join("config.txt"), r.echo()).map_err(VeError::from)?;

    let ctx = DataContext {
        vocab: &vocab,
        features: features.as_ref(),
        premises: premises.as_ref(),
    };
    let mut log = BufWriter::new(File::create(out.join("train_log.jsonl")).map_err(VeError::from)?);
    let outcome = train_model(
        &mut params,
        &train_set,
        &val_set,
        &ctx,
        &cfg,
        TrainOptions {
            exec,
            checkpoint_dir: Some(ckpt_dir),
            log: Some(&mut log),
        },
    )?;
    log.flush().map_err(VeError::from)?;
    drop(log);

    let best = out.join(BEST_CHECKPOINT);
    vekit::models::save_checkpoint(&best, &outcome.selected_params)?;
    let summary = json!({
        "arch": arch.tag(),
        "epochs": outcome.log.len(),
        "train_instances": train_set.len(),
        "val_instances": val_set.len(),
        "vocabulary": vocab.len(),
        "selected_epoch": outcome.selected.epoch,
        "selected_checkpoint": outcome.selected.path,
        "best": best,
        "val": metrics_json(&outcome.selected.metrics),
    });
    write_json(&out.join("summary.json"), &summary)?;
    print_json(&summary)
}

pub fn eval(a: EvalArgs, r: &mut Resolver) -> CliResult {
    let checkpoint = PathBuf::from(r.required::<String>("checkpoint", a.checkpoint)?);
    let dataset = r.required::<String>("dataset", a.dataset)?;
    let partition = parse_partition(&r.or("partition", a.partition, "test".to_string())?)?;
    let features = r.optional::<String>("features", a.features)?;
    let captions = r.optional::<String>("captions", a.captions)?;
    let vocab_path = r.optional::<String>("vocab", a.vocab)?;
    let predictions = r.optional::<String>("predictions", a.predictions)?;
    let batch = r.or(
        "eval-batch-size",
        a.eval_batch_size,
        TrainConfig::default().eval_batch_size,
    )?;
    let exec = execution(r.switch("sequential", a.sequential)?);
    echo("eval", r);
    if batch == 0 {
        return Err(CliError::Usage("--eval-batch-size must be positive".into()));
    }

    let params = load_checkpoint(&checkpoint)?;
    let vocab = checkpoint_vocab(&checkpoint, vocab_path.as_deref())?;
    if vocab.len() != params.dims.vocab {
        return Err(VeError::Config(format!(
            "vocabulary has {} entries but the checkpoint embeds {}",
            vocab.len(),
            params.dims.vocab
        ))
        .into());
    }
    let mut ds = VEDataset::read_dir(Path::new(&dataset))?;
    let set = std::mem::take(ds.partition_mut(partition));
    let captions = captions.as_deref().map(read_captions).transpose()?;
    let (premises, sets) = attach_captions(params.arch, captions.as_ref(), &vocab, vec![set])?;
    let set = sets.into_iter().next().expect("one set");
    if set.is_empty() {
        return Err(CliError::Validation(format!("partition {} is empty", partition.name())));
    }
    let features = load_features(params.arch, features.as_deref(), &[&set], exec)?;
    let ctx = DataContext {
        vocab: &vocab,
        features: features.as_ref(),
        premises: premises.as_ref(),
    };
    let preds = predict_partition(&params, &set, &ctx, batch, exec)?;
    let mut metrics = vekit::training::Metrics::default();
    let mut w = match &predictions {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(VeError::from)?)),
        None => None,
    };
    for (inst, p) in set.iter().zip(&preds) {
        let predicted = vekit::dataset::Label::from_index(p.argmax()).expect("three logits");
        metrics.record(inst.label, predicted);
        if let Some(w) = w.as_mut() {
            let line = json!({
                "pair_id": inst.pair_id,
                "image_id": inst.image_id,
                "label": inst.label,
                "predicted": predicted,
                "logits": p.logits,
            });
            writeln!(w, "{line}").map_err(VeError::from)?;
        }
    }
    if let Some(mut w) = w {
        w.flush().map_err(VeError::from)?;
    }
    let mut v = metrics_json(&metrics);
    v["arch"] = json!(params.arch.tag());
    v["partition"] = json!(partition.name());
    print_json(&v)
}

pub fn visualize(a: VisualizeArgs, r: &mut Resolver) -> CliResult {
    let checkpoint = PathBuf::from(r.required::<String>("checkpoint", a.checkpoint)?);
    let feature_file = r.optional::<String>("feature-file", a.feature_file)?;
    let features = r.optional::<String>("features", a.features)?;
    let hypothesis = r.optional::<String>("hypothesis", a.hypothesis)?;
    let dataset = r.optional::<String>("dataset", a.dataset)?;
    let pair_id = r.optional::<String>("pair-id", a.pair_id)?;
    let out = PathBuf::from(r.required::<String>("out", a.out)?);
    let vocab_path = r.optional::<String>("vocab", a.vocab)?;
    echo("visualize", r);

    let params = load_checkpoint(&checkpoint)?;
    if !params.arch.is_eve() {
        return Err(VeError::Config(format!(
            "visualize needs an eve-image or eve-roi checkpoint, got {}",
            params.arch
        ))
        .into());
    }
    let vocab = checkpoint_vocab(&checkpoint, vocab_path.as_deref())?;

    let (text, image_id) = match (hypothesis, dataset, pair_id) {
        (Some(h), None, None) => (h, None),
        (None, Some(dir), Some(pair)) => {
            let ds = VEDataset::read_dir(Path::new(&dir))?;
            let inst = ds
                .all()
                .find(|i| i.pair_id == pair)
                .ok_or_else(|| VeError::Missing(format!("pair {pair:?} in {dir}")))?;
            (inst.tokens.join(" "), Some(inst.image_id.clone()))
        }
        _ => {
            return Err(CliError::Usage(
                "give either --hypothesis or both --dataset and --pair-id".into(),
            ))
        }
    };
    let fs = match (feature_file, features, image_id) {
        (Some(f), _, _) => read_feature_file(Path::new(&f))?,
        (None, Some(dir), Some(id)) => FeatureStore::new(dir).load(&id)?,
        _ => {
            return Err(CliError::Usage(
                "give --feature-file, or --features with --dataset/--pair-id".into(),
            ))
        }
    };

    let map = attention_map(&params, &vocab, &text, &fs)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(VeError::from)?;
    }
    let pgm = write_attention(&map, &out)?;
    print_json(&json!({
        "image_id": map.image_id,
        "predicted_label": map.predicted_label,
        "json": out,
        "pgm": pgm,
    }))
}
