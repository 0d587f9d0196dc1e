use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use gait_core::contrastive::lcl_loss;
use gait_core::evaluation::{cmc, match_gallery, rank_by_distance, LabeledVector};
use gait_core::numerics::{lstm_step, LstmCellParams, LstmState, ParamStore, Tape};
use gait_core::seq2seq::{batch_loss, encode, AttentionMode, DimSample, GaitModel, LossWeights, ModelConfig};
use gait_core::skeleton_io::{AuxRule, Dim, DimensionSlice, PretextTask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const J: usize = 20;
const F: usize = 6;

fn slice(rng: &mut ChaCha8Rng) -> DimensionSlice {
    DimensionSlice {
        dim: Dim::X,
        values: (0..F).map(|_| (0..J).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
    }
}

fn sample(rng: &mut ChaCha8Rng) -> DimSample {
    let input = slice(rng);
    let mut target = input.clone();
    target.values.reverse();
    DimSample {
        input,
        target,
        aux_rule: AuxRule::GroundTruthTarget,
    }
}

fn model(hidden: usize, attention: AttentionMode) -> GaitModel {
    let cfg = ModelConfig {
        joints: J,
        hidden,
        seq_len: F,
        window: 2,
        attention,
        projection_hidden: None,
    };
    GaitModel::init(&cfg, PretextTask::ReverseReconstruction, 1).unwrap()
}

fn bench_lstm_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("lstm_step");
    for k in [32, 128] {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cell = LstmCellParams::init(&mut store, "cell", J, k, &mut rng).unwrap();
        let x: Vec<f64> = (0..J).map(|i| i as f64 / J as f64).collect();
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, &k| {
            b.iter(|| {
                let mut tape = Tape::new();
                let input = tape.constant_vec(x.clone()).unwrap();
                let state = LstmState::zeros(&mut tape, k).unwrap();
                black_box(lstm_step(&mut tape, &store, &cell, input, state).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_encode(c: &mut Criterion) {
    let m = model(128, AttentionMode::Las);
    let s = slice(&mut ChaCha8Rng::seed_from_u64(2));
    c.bench_function("encode_k128", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            black_box(encode(&mut tape, m.dim(Dim::X), &s).unwrap())
        })
    });
}

fn bench_batch_loss(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let batch: Vec<DimSample> = (0..4).map(|_| sample(&mut rng)).collect();
    let weights = LossWeights::default();
    let mut group = c.benchmark_group("batch_loss");
    for mode in [AttentionMode::Bas, AttentionMode::Las] {
        let m = model(32, mode);
        let w = LossWeights {
            lambda_a: if mode == AttentionMode::Las { weights.lambda_a } else { 0.0 },
            ..weights
        };
        group.bench_function(BenchmarkId::new("forward", mode.name()), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                black_box(batch_loss(&mut tape, m.dim(Dim::X), &batch, &w, 0.1).unwrap().total)
            })
        });
        group.bench_function(BenchmarkId::new("forward_backward", mode.name()), |b| {
            b.iter(|| {
                let mut tape = Tape::new();
                let loss = batch_loss(&mut tape, m.dim(Dim::X), &batch, &w, 0.1).unwrap();
                black_box(tape.backward(loss.total).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_lcl(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut group = c.benchmark_group("lcl_loss");
    for n in [4, 16] {
        let z: Vec<Vec<f64>> = (0..2 * n - 2)
            .map(|_| (0..64).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &z, |b, z| {
            b.iter(|| black_box(lcl_loss(z, 0.1).unwrap()))
        });
    }
    group.finish();
}

fn bench_metrics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let classes = 50;
    let probes: Vec<LabeledVector> = (0..500)
        .map(|i| LabeledVector {
            label: i % classes,
            vector: (0..64).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let gallery: Vec<LabeledVector> = (0..200)
        .map(|i| LabeledVector {
            label: i % classes,
            vector: (0..64).map(|_| rng.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let rankings: Vec<Vec<usize>> = probes
        .iter()
        .map(|_| {
            let d: Vec<(usize, f64)> = (0..classes).map(|l| (l, rng.random::<f64>())).collect();
            rank_by_distance(&d)
        })
        .collect();
    let truth: Vec<usize> = probes.iter().map(|p| p.label).collect();

    c.bench_function("cmc_500x50", |b| b.iter(|| black_box(cmc(&rankings, &truth).unwrap())));
    c.bench_function("match_gallery_500x200", |b| {
        b.iter(|| black_box(match_gallery(&probes, &gallery).unwrap()))
    });
}

criterion_group!(benches, bench_lstm_step, bench_encode, bench_batch_loss, bench_lcl, bench_metrics);
criterion_main!(benches);
