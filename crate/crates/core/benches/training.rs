use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use attrnet::data::{synthetic, CharVocabulary, DomainCatalog};
use attrnet::layers::HybridNetwork;
use attrnet::numerics::Rng;
use attrnet::par::Execution;
use attrnet::training::{batch_gradient, train, TrainConfig};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn catalog() -> DomainCatalog {
    DomainCatalog::from_records(synthetic::generate(&synthetic::SyntheticConfig::default()).unwrap()).unwrap()
}

fn minibatch_gradient(c: &mut Criterion) {
    let cat = catalog();
    let vocab = CharVocabulary::from_catalog(&cat);
    let encoded: Vec<(Vec<usize>, usize)> = cat
        .labelled()
        .into_iter()
        .map(|(r, k)| (vocab.encode(&r.value), k))
        .collect();
    let mut cfg = TrainConfig::default();
    cfg.embedding_size = 32;
    let net = HybridNetwork::new(cfg.network_config(vocab.size(), cat.num_classes()), &mut Rng::new(1)).unwrap();

    let mut group = c.benchmark_group("batch_gradient");
    for batch_size in [10usize, 64] {
        let batch: Vec<(&[usize], usize)> = encoded[..batch_size].iter().map(|(i, k)| (i.as_slice(), *k)).collect();
        let seeds: Vec<u64> = (0..batch_size as u64).collect();
        for (name, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(name, batch_size), &batch, |b, batch| {
                b.iter(|| batch_gradient(black_box(&net), batch, &seeds, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let cat = catalog();
    let mut group = c.benchmark_group("train_one_epoch");
    group.sample_size(10);
    for (name, exec) in MODES {
        let mut cfg = TrainConfig::default();
        cfg.embedding_size = 16;
        cfg.epochs = 1;
        cfg.batch_size = 32;
        cfg.learning_rate = 1e-3;
        cfg.execution = exec;
        group.bench_function(name, |b| b.iter(|| train(black_box(&cat), &cfg).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, minibatch_gradient, training_epoch);
criterion_main!(benches);
