use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ghforest::{forest_knn, Metric, SearchConfig};
use ghforest_bench::blobs;
use std::hint::black_box;

fn knn(c: &mut Criterion) {
    let fx = blobs(10_000, 64);
    let mut group = c.benchmark_group("knn");
    for k in [5, 10, 50] {
        for forest in &fx.forests {
            group.bench_with_input(BenchmarkId::new(forest.method.to_string(), k), &k, |b, &k| {
                b.iter(|| {
                    for q in &fx.queries {
                        black_box(forest_knn(forest, q, k, &Metric::Euclidean, SearchConfig::default()).unwrap());
                    }
                })
            });
        }
    }
    group.finish();
}

fn sequential(c: &mut Criterion) {
    let fx = blobs(10_000, 64);
    let config = SearchConfig {
        parallel: false,
        ..SearchConfig::default()
    };
    let mut group = c.benchmark_group("knn_sequential");
    for forest in &fx.forests {
        group.bench_function(forest.method.to_string(), |b| {
            b.iter(|| {
                for q in &fx.queries {
                    black_box(forest_knn(forest, q, 10, &Metric::Euclidean, config).unwrap());
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, knn, sequential);
criterion_main!(benches);
