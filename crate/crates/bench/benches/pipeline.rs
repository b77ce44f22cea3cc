use std::hint::black_box;

use coughscreen_core::audio_io::{decode_wav, encode_wav_i16, CaseId};
use coughscreen_core::features::{CaseFeatures, SpecAugmentPolicy};
use coughscreen_core::models::{CaseModel, MiniCNN14};
use coughscreen_core::nn::TrainConfig;
use coughscreen_core::pipeline::{
    auc, init_effnet, samples_from_clips, stage2_embeddings, synthetic_corpus, train_effnet_epochs, Sample,
};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn features(c: &mut Criterion) {
    let mut group = c.benchmark_group("features");
    for case in CaseId::ALL {
        let (_, _, clip) = synthetic_corpus(case, 1, 0).remove(0);
        let cfg = case.config();
        group.bench_function(format!("extract/{case}"), |b| {
            b.iter(|| CaseFeatures::extract(black_box(&clip), &cfg).unwrap())
        });
    }
    let (_, _, clip) = synthetic_corpus(CaseId::Case8k, 1, 0).remove(0);
    let bytes = encode_wav_i16(&clip);
    group.bench_function("decode_wav", |b| b.iter(|| decode_wav(black_box(&bytes)).unwrap()));
    group.finish();
}

fn training(c: &mut Criterion) {
    let case = CaseId::Case8k;
    let data: Vec<Sample> = samples_from_clips(&synthetic_corpus(case, 16, 1), &case.config()).unwrap();
    let refs: Vec<&Sample> = data.iter().collect();
    // One epoch over a single batch is one optimizer step.
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let policy = SpecAugmentPolicy::default();
    let mut group = c.benchmark_group("training");
    group.sample_size(10);
    group.bench_function("effnet_step_batch16", |b| {
        b.iter_batched(
            || init_effnet(0),
            |mut net| train_effnet_epochs(&mut net, &refs, &cfg, &policy).unwrap(),
            BatchSize::LargeInput,
        )
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("inference");
    group.sample_size(20);
    for case in [CaseId::Case8k, CaseId::Case48k] {
        let cfg = case.config();
        let data = samples_from_clips(&synthetic_corpus(case, 1, 2), &cfg).unwrap();
        let refs: Vec<&Sample> = data.iter().collect();
        let cnn14 = MiniCNN14::<f32>::new(cfg.stage2_wavegram, &mut ChaCha8Rng::seed_from_u64(3));
        group.bench_function(format!("cnn14_embedding/{case}"), |b| {
            b.iter(|| stage2_embeddings(&cnn14, black_box(&refs), &cfg).unwrap())
        });
        let model = CaseModel::new(case, 4);
        group.bench_function(format!("case_model_logit/{case}"), |b| {
            b.iter(|| model.logit(black_box(&data[0].features)).unwrap())
        });
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pairs: Vec<(f64, u8)> = (0..10_000)
        .map(|i| ((rng.random_range(0..1000) as f64) / 1000.0, (i % 2) as u8))
        .collect();
    c.bench_function("auc_10k_with_ties", |b| b.iter(|| auc(black_box(&pairs)).unwrap()));
}

criterion_group!(benches, features, training, inference, metrics);
criterion_main!(benches);
