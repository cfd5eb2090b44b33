//! Sequential vs rayon execution of one training batch and one validation
//! pass for EVE-Image on synthetic 7×7 grid features.

use std::collections::HashMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vekit::dataset::{make_batches, Label, VEInstance};
use vekit::features::FeatureSet;
use vekit::models::{Architecture, ModelDims, ModelParams};
use vekit::numcore::Tensor;
use vekit::par::Execution;
use vekit::text::Vocabulary;
use vekit::training::{batch_gradients, evaluate, DataContext};

const INSTANCES: usize = 64;
const IMAGES: usize = 16;

fn setup() -> (Vec<VEInstance>, Vocabulary, HashMap<String, FeatureSet>, ModelParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let words: Vec<String> = (0..50).map(|i| format!("w{i}")).collect();
    let set: Vec<VEInstance> = (0..INSTANCES)
        .map(|i| VEInstance {
            image_id: format!("img{}", i % IMAGES),
            pair_id: format!("p{i}"),
            tokens: (0..rng.gen_range(5..12))
                .map(|_| words[rng.gen_range(0..50)].clone())
                .collect(),
            label: Label::ALL[i % 3],
        })
        .collect();
    let vocab = Vocabulary::build(set.iter().map(|i| i.tokens.as_slice()));
    let feat = 64;
    let features = (0..IMAGES)
        .map(|n| {
            let data = (0..49 * feat).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let id = format!("img{n}");
            (
                id.clone(),
                FeatureSet::grid(id, Tensor::new(vec![49, feat], data).unwrap(), 7).unwrap(),
            )
        })
        .collect();
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: 32,
        hidden: 32,
        feat,
        head_hidden: 32,
        rn_hidden: 32,
    };
    let params = ModelParams::init(Architecture::EveImage, dims, None, 1).unwrap();
    (set, vocab, features, params)
}

fn bench(c: &mut Criterion) {
    let (set, vocab, features, params) = setup();
    let ctx = DataContext {
        vocab: &vocab,
        features: Some(&features),
        premises: None,
    };
    let batch = make_batches(&set, &vocab, INSTANCES, None).remove(0);

    let mut group = c.benchmark_group("eve_image");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new("batch_gradients", name), &exec, |b, &exec| {
            b.iter(|| black_box(batch_gradients(&params, &ctx, &batch, exec).unwrap()))
        });
        group.bench_with_input(BenchmarkId::new("evaluate", name), &exec, |b, &exec| {
            b.iter(|| black_box(evaluate(&params, &set, &ctx, 32, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
