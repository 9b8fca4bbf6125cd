use std::path::{Path, PathBuf};
use std::process::Command;

use ghforest::{forest_knn, BuildMethod, Metric, SearchConfig};
use ghforest_cli::commands::load_forest;
use ghforest_cli::report::StatsReport;
use ghforest_cli::{
    cmd_bench, cmd_build, cmd_gen, cmd_query, cmd_verify, BenchArgs, BuildArgs, CliError, ClusterParams, GenArgs,
    PruningArg, QueryArgs, VerifyArgs,
};
use tempfile::TempDir;

fn params(epsilon: Option<f64>, minpts: Option<usize>) -> ClusterParams {
    ClusterParams {
        epsilon,
        minpts,
        xi_min: 0.4,
        xi_max: 0.8,
        metric: Metric::Euclidean,
        seed: 0,
    }
}

/// 1500 points in three blobs plus 100 queries.
fn blobs(dir: &Path) -> (PathBuf, PathBuf) {
    let (data, queries) = (dir.join("data.csv"), dir.join("queries.csv"));
    let out = cmd_gen(&GenArgs {
        out: data.clone(),
        points: 1500,
        clusters: 3,
        dimension: 5,
        separation: 50.0,
        sigma: 1.0,
        seed: 11,
        queries_out: Some(queries.clone()),
        num_queries: 100,
    })
    .unwrap();
    assert_eq!((out.objects, out.dimension, out.queries), (1500, 5, 100));
    (data, queries)
}

fn build(dir: &Path, data: &Path, method: BuildMethod) -> (PathBuf, StatsReport) {
    let out = dir.join(format!("{method}.ghf"));
    let report = cmd_build(&BuildArgs {
        input: data.to_path_buf(),
        method,
        params: params(Some(1.5), Some(10)),
        out: out.clone(),
        stats: None,
    })
    .unwrap();
    (out, report)
}

fn query_args(forest: &Path, queries: &Path, k: Vec<usize>, oracle: bool) -> QueryArgs {
    QueryArgs {
        forest: forest.to_path_buf(),
        queries: queries.to_path_buf(),
        k,
        oracle,
        pruning: PruningArg::Covering,
        sequential: false,
        out: None,
        rows_csv: None,
    }
}

#[test]
fn baseline_on_small_csv() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("small.csv");
    let rows: String = (0..100).map(|i| format!("{},{}\n", i % 10, i / 10)).collect();
    std::fs::write(&data, format!("x,y\n{rows}")).unwrap();
    let report = cmd_build(&BuildArgs {
        input: data,
        method: BuildMethod::Baseline,
        params: params(None, None),
        out: dir.path().join("b.ghf"),
        stats: None,
    })
    .unwrap();
    assert_eq!(report.trees.len(), 1);
    assert!(report.trees[0].height >= 1);
    assert!(report.plan.is_none());
    let build = report.build.unwrap();
    assert_eq!(build.total, build.clustering + build.planning + build.indexing);
}

#[test]
fn overlap_methods_on_blobs() {
    let dir = TempDir::new().unwrap();
    let (data, _) = blobs(dir.path());
    for method in [BuildMethod::Vbm, BuildMethod::Dbm, BuildMethod::Obm] {
        let (_, report) = build(dir.path(), &data, method);
        assert!(report.trees.len() >= 3);
        let plan = report.plan.unwrap();
        assert_eq!(plan.low_pairs + plan.medium_pairs + plan.high_pairs, plan.pairs_scored);
        assert_eq!(report.totals.objects, 1500);
        assert_eq!(report.clustering.unwrap().partitions, 3);
    }
}

#[test]
fn query_rows_and_aggregates() {
    let dir = TempDir::new().unwrap();
    let (data, queries) = blobs(dir.path());
    let (forest, _) = build(dir.path(), &data, BuildMethod::Vbm);
    let report = cmd_query(&query_args(&forest, &queries, vec![5], true)).unwrap();
    assert_eq!(report.queries.len(), 1);
    let block = &report.queries[0];
    assert_eq!(block.rows.len(), 100);
    let mean = block.rows.iter().map(|r| r.distances as f64).sum::<f64>() / 100.0;
    assert!((block.aggregate.mean_distances - mean).abs() <= 1e-12);
    let mean = block.rows.iter().map(|r| r.comparisons as f64).sum::<f64>() / 100.0;
    assert!((block.aggregate.mean_comparisons - mean).abs() <= 1e-12);
    for row in &block.rows {
        let recall = row.recall.unwrap();
        assert!((0.0..=1.0).contains(&recall));
    }
    assert!(block.aggregate.mean_recall.is_some());

    let plain = cmd_query(&query_args(&forest, &queries, vec![5], false)).unwrap();
    assert!(plain.queries[0].rows.iter().all(|r| r.recall.is_none()));
}

#[test]
fn query_costs_are_deterministic() {
    let dir = TempDir::new().unwrap();
    let (data, queries) = blobs(dir.path());
    let (forest, _) = build(dir.path(), &data, BuildMethod::Dbm);
    let costs = |r: &StatsReport| -> Vec<(u64, u64)> {
        r.queries
            .iter()
            .flat_map(|b| b.rows.iter().map(|row| (row.distances, row.comparisons)))
            .collect()
    };
    let a = cmd_query(&query_args(&forest, &queries, vec![5, 10], false)).unwrap();
    let mut seq = query_args(&forest, &queries, vec![5, 10], false);
    seq.sequential = true;
    let b = cmd_query(&seq).unwrap();
    assert_eq!(costs(&a), costs(&b));
}

#[test]
fn artifact_round_trip_matches_in_memory_forest() {
    let dir = TempDir::new().unwrap();
    let (data, queries) = blobs(dir.path());
    let (path, _) = build(dir.path(), &data, BuildMethod::Obm);
    let loaded = load_forest(&path).unwrap();
    let cfg = ghforest::BuildConfig {
        method: BuildMethod::Obm,
        dbscan: ghforest::DbscanParams::new(1.5, 10).unwrap(),
        thresholds: ghforest::Thresholds::default(),
        metric: Metric::Euclidean,
    };
    let ds = ghforest::ingest::read_csv_path(&data).unwrap();
    let (fresh, _) = ghforest::build_forest(ds, &cfg).unwrap();
    assert_eq!(loaded, fresh);
    for q in ghforest::ingest::read_rows_path(&queries).unwrap() {
        let a = forest_knn(&loaded, &q, 7, &Metric::Euclidean, SearchConfig::default()).unwrap();
        let b = forest_knn(&fresh, &q, 7, &Metric::Euclidean, SearchConfig::default()).unwrap();
        assert_eq!((a.hits, a.counters), (b.hits, b.counters));
    }
}

#[test]
fn query_dimension_mismatch_names_both() {
    let dir = TempDir::new().unwrap();
    let (data, _) = blobs(dir.path());
    let (forest, _) = build(dir.path(), &data, BuildMethod::Vbm);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2,3\n").unwrap();
    let err = cmd_query(&query_args(&forest, &bad, vec![5], false)).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Data(_)));
    assert!(msg.contains('5') && msg.contains('3'), "{msg}");
}

fn bench_args(data: &Path, k: Vec<usize>) -> BenchArgs {
    BenchArgs {
        input: data.to_path_buf(),
        params: params(Some(1.5), Some(10)),
        k,
        queries: None,
        num_queries: 20,
        methods: BuildMethod::ALL.to_vec(),
        oracle: true,
        pruning: PruningArg::Covering,
        out: None,
    }
}

#[test]
fn bench_compares_all_methods() {
    let dir = TempDir::new().unwrap();
    let (data, _) = blobs(dir.path());
    let report = cmd_bench(&bench_args(&data, vec![5, 10])).unwrap();
    assert_eq!(report.methods.len(), 4);
    assert_eq!(report.num_queries, 20);
    for m in &report.methods {
        assert_eq!(m.aggregates.iter().map(|a| a.k).collect::<Vec<_>>(), vec![5, 10]);
        assert_eq!(m.at_k(5).unwrap().min_recall, Some(1.0));
    }
    let base = report.method(BuildMethod::Baseline).unwrap();
    assert_eq!(base.totals.trees, 1);
    assert_eq!(base.build.clustering, ghforest::CostCounters::new());

    assert!(matches!(
        cmd_bench(&bench_args(&data, vec![])),
        Err(CliError::Config(_))
    ));
}

#[test]
fn bench_single_cluster_matches_baseline_shape() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("one.csv");
    cmd_gen(&GenArgs {
        out: data.clone(),
        points: 800,
        clusters: 1,
        dimension: 3,
        separation: 0.0,
        sigma: 1.0,
        seed: 2,
        queries_out: None,
        num_queries: 0,
    })
    .unwrap();
    let mut args = bench_args(&data, vec![5]);
    args.params.epsilon = Some(3.0);
    args.params.minpts = Some(5);
    let report = cmd_bench(&args).unwrap();
    for m in &report.methods {
        assert_eq!(m.totals.trees, 1, "{}", m.method);
    }
}

#[test]
fn verify_passes_on_defaults() {
    let report = cmd_verify(&VerifyArgs {
        input: None,
        seed: 3,
        pairs: 20,
        mc_samples: 200_000,
        num_queries: 20,
        k: vec![1, 10],
        out: None,
    })
    .unwrap();
    assert!(report.checks.iter().all(|c| c.passed), "{:?}", report.checks);
}

fn ghforest() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ghforest"))
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let (data, queries) = blobs(dir.path());
    let forest = dir.path().join("f.ghf");

    let status = ghforest()
        .args(["build", "--method", "vbm", "--xi-min", "0.9", "--xi-max", "0.1"])
        .arg("--input")
        .arg(&data)
        .arg("--out")
        .arg(&forest)
        .args(["--epsilon", "1.5", "--minpts", "10"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let out = ghforest()
        .args(["build", "--method", "baseline", "--input"])
        .arg(&bad)
        .arg("--out")
        .arg(&forest)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    // Flags mirrored through the environment.
    let stats = dir.path().join("stats.json");
    let status = ghforest()
        .args(["build", "--input"])
        .arg(&data)
        .arg("--out")
        .arg(&forest)
        .arg("--stats")
        .arg(&stats)
        .env("GHF_METHOD", "dbm")
        .env("GHF_EPSILON", "1.5")
        .env("GHF_MINPTS", "10")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: StatsReport = serde_json::from_str(&std::fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(report.method, BuildMethod::Dbm);
    assert_eq!(report.schema_version, 1);

    let rows = dir.path().join("rows.csv");
    let out = ghforest()
        .args(["query", "--k", "3,4", "--forest"])
        .arg(&forest)
        .arg("--queries")
        .arg(&queries)
        .arg("--rows-csv")
        .arg(&rows)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["queries"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_to_string(&rows).unwrap().lines().count(), 201);
}
