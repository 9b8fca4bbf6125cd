//! Shared fixtures for the benchmarks.

use ghforest::synth::BlobSpec;
use ghforest::{build_forest, BuildConfig, BuildMethod, DbscanParams, Forest, Metric, Thresholds};

pub struct Fixture {
    pub forests: Vec<Forest>,
    pub queries: Vec<Vec<f64>>,
}

/// Three separated 5-D blobs, one forest per build method.
pub fn blobs(points: usize, num_queries: usize) -> Fixture {
    let spec = BlobSpec {
        points,
        seed: 42,
        ..BlobSpec::default()
    };
    let (ds, _) = spec.generate().expect("blob spec is valid");
    let forests = BuildMethod::ALL
        .iter()
        .map(|&method| {
            let cfg = BuildConfig {
                method,
                dbscan: DbscanParams::new(1.5, 10).expect("valid dbscan params"),
                thresholds: Thresholds::default(),
                metric: Metric::Euclidean,
            };
            build_forest(ds.clone(), &cfg).expect("build succeeds").0
        })
        .collect();
    let queries = spec.queries(num_queries, 7).expect("queries");
    Fixture { forests, queries }
}
