use std::hint::black_box;

use coe_bench::{corpus, dataset, trained};
use coe_core::router::{featurize, FeaturizerSpec, TrainConfig};
use coe_core::{oracle_bounds, replay, route, train, Policy};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

const TEXT: &str = "alpha3 alpha17 beta9: which of the following best describes alpha21?";

fn featurizer(c: &mut Criterion) {
    let spec = FeaturizerSpec::default();
    c.bench_function("featurize", |b| b.iter(|| featurize(black_box(TEXT), &spec)));
}

fn routing(c: &mut Criterion) {
    let params = trained(50);
    c.bench_function("route", |b| b.iter(|| route(&params, black_box(TEXT))));
}

fn training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for per_class in [50, 250] {
        let d = dataset(per_class);
        group.throughput(Throughput::Elements(d.examples.len() as u64));
        group.bench_with_input(BenchmarkId::from_parameter(d.examples.len()), &d, |b, d| {
            b.iter(|| train(d, FeaturizerSpec::default(), &TrainConfig::default()).unwrap())
        });
    }
    group.finish();
}

fn evaluation(c: &mut Criterion) {
    let m = corpus(500);
    let params = trained(50);
    let mut group = c.benchmark_group("replay");
    group.throughput(Throughput::Elements(m.len() as u64));
    group.bench_function("oracle_bounds", |b| b.iter(|| oracle_bounds(black_box(&m))));
    group.bench_function("query_oracle", |b| b.iter(|| replay(&m, Policy::QueryOracle).unwrap()));
    group.bench_function("router", |b| b.iter(|| replay(&m, Policy::Router(&params)).unwrap()));
    group.finish();
}

criterion_group!(benches, featurizer, routing, training, evaluation);
criterion_main!(benches);
