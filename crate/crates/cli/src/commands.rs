use std::fs::File;
use std::io::{BufReader, BufWriter, Write};

use ghforest::geometry::{vbm_rate, OverlapDetail};
use ghforest::ght::Pruning;
use ghforest::ingest::{read_csv_path, read_rows_path, write_csv};
use ghforest::pipeline::{build_from_clusters, cluster, Clustered};
use ghforest::planner::{IndexGroup, IndexKind};
use ghforest::synth::{uniform, BlobSpec};
use ghforest::{
    forest_knn, recall_at_k, Ball, BuildConfig, BuildCost, BuildMethod, CostCounters, Dataset, DbscanParams, Forest,
    GhTree, Hit, Metric, SearchConfig, Thresholds,
};
use ghforest_oracles::{brute_knn, closed_form_lens, mc_lens_volume, OracleBall, OracleConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::{
    Aggregate, BenchReport, BuildCostReport, Check, ClusterInfo, DatasetInfo, ForestTotals, MethodBench, QueryBlock,
    QueryRow, StatsReport, VerifyReport, SCHEMA_VERSION,
};
use crate::{BenchArgs, BuildArgs, CliError, CliResult, ClusterParams, GenArgs, QueryArgs, VerifyArgs};

#[derive(Debug, Clone, PartialEq)]
pub struct GenOutput {
    pub objects: usize,
    pub dimension: usize,
    pub queries: usize,
}

pub fn cmd_gen(args: &GenArgs) -> CliResult<GenOutput> {
    let spec = BlobSpec {
        clusters: args.clusters,
        points: args.points,
        dimension: args.dimension,
        separation: args.separation,
        sigma: args.sigma,
        seed: args.seed,
    };
    let (ds, _) = spec.generate()?;
    let rows: Vec<Vec<f64>> = ds.objects().iter().map(|o| o.coords.clone()).collect();
    write_rows(&rows, &args.out)?;
    let mut queries = 0;
    if let Some(path) = &args.queries_out {
        let q = spec.queries(args.num_queries, args.seed)?;
        queries = q.len();
        write_rows(&q, path)?;
    }
    Ok(GenOutput {
        objects: ds.len(),
        dimension: ds.dimension(),
        queries,
    })
}

fn write_rows(rows: &[Vec<f64>], path: &std::path::Path) -> CliResult<()> {
    let file = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    write_csv(&mut out, rows)?;
    out.flush().map_err(|e| CliError::Data(e.to_string()))
}

/// Validated build configuration. The baseline never clusters, so it does
/// not need DBSCAN parameters.
pub fn build_config(method: BuildMethod, p: &ClusterParams) -> CliResult<BuildConfig> {
    let thresholds = Thresholds::new(p.xi_min, p.xi_max)?;
    let dbscan = match (p.epsilon, p.minpts) {
        (Some(eps), Some(min_pts)) => DbscanParams::new(eps, min_pts)?,
        _ if method == BuildMethod::Baseline => DbscanParams {
            epsilon: p.epsilon.unwrap_or(1.0),
            min_pts: p.minpts.unwrap_or(1),
        },
        _ => {
            return Err(CliError::Config(format!(
                "--epsilon and --minpts are required for method {method}"
            )))
        }
    };
    Ok(BuildConfig {
        method,
        dbscan,
        thresholds,
        metric: p.metric,
    })
}

fn build(ds: Dataset, cfg: &BuildConfig, clustered: Option<&Clustered>) -> CliResult<(Forest, BuildCost)> {
    Ok(build_from_clusters(ds, cfg, clustered)?)
}

fn cluster_info(c: &Clustered) -> ClusterInfo {
    ClusterInfo {
        partitions: c.partitions.len(),
        noise: c.noise,
    }
}

pub fn cmd_build(args: &BuildArgs) -> CliResult<StatsReport> {
    let cfg = build_config(args.method, &args.params)?;
    let ds = read_csv_path(&args.input)?;
    let clustered = match args.method {
        BuildMethod::Baseline => None,
        _ => Some(cluster(&ds, &cfg.dbscan, cfg.metric)?),
    };
    let (forest, cost) = build(ds, &cfg, clustered.as_ref())?;
    let file = File::create(&args.out).map_err(|e| CliError::Data(format!("{}: {e}", args.out.display())))?;
    let mut out = BufWriter::new(file);
    forest.save(&mut out)?;
    out.flush().map_err(|e| CliError::Data(e.to_string()))?;

    let mut report = StatsReport::for_forest(&forest, args.params.seed);
    report.clustering = clustered.as_ref().map(cluster_info);
    report.build = Some(cost.into());
    Ok(report)
}

fn check_k_list(k_list: &[usize]) -> CliResult<()> {
    if k_list.is_empty() {
        return Err(CliError::Config("k list is empty".into()));
    }
    if k_list.contains(&0) {
        return Err(CliError::Config("k must be at least 1".into()));
    }
    Ok(())
}

fn oracle_hits(ds: &Dataset, q: &[f64], k: usize) -> Vec<Hit> {
    brute_knn(ds.objects().iter().map(|o| (o.id, o.coords.as_slice())), q, k)
        .into_iter()
        .map(|(id, distance)| Hit { id, distance })
        .collect()
}

/// Runs every query at every k. Queries run one after another so timings do
/// not interfere.
pub fn run_queries(
    forest: &Forest,
    queries: &[Vec<f64>],
    k_list: &[usize],
    oracle: bool,
    config: SearchConfig,
) -> CliResult<Vec<QueryBlock>> {
    check_k_list(k_list)?;
    for q in queries {
        forest.dataset.check_dimension(q)?;
    }
    let mut blocks = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let mut rows = Vec::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            let result = forest_knn(forest, q, k, &forest.metric, config)?;
            let recall = if oracle {
                if forest.metric != Metric::Euclidean {
                    return Err(CliError::Config("the oracle only supports the euclidean metric".into()));
                }
                Some(recall_at_k(&result.hits, &oracle_hits(&forest.dataset, q, k))?)
            } else {
                None
            };
            rows.push(QueryRow::new(i, k, &result, recall));
        }
        let aggregate = Aggregate::of(k, &rows);
        blocks.push(QueryBlock { k, rows, aggregate });
    }
    Ok(blocks)
}

pub fn load_forest(path: &std::path::Path) -> CliResult<Forest> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Forest::load(BufReader::new(file))?)
}

pub fn cmd_query(args: &QueryArgs) -> CliResult<StatsReport> {
    check_k_list(&args.k)?;
    let forest = load_forest(&args.forest)?;
    let queries = read_rows_path(&args.queries)?;
    let config = SearchConfig {
        pruning: args.pruning.into(),
        parallel: !args.sequential,
    };
    let mut report = StatsReport::for_forest(&forest, 0);
    report.queries = run_queries(&forest, &queries, &args.k, args.oracle, config)?;
    Ok(report)
}

/// `n` dataset objects drawn uniformly with replacement.
pub fn sample_queries(ds: &Dataset, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| ds.coords(rng.random_range(0..ds.len())).to_vec())
        .collect()
}

pub fn cmd_bench(args: &BenchArgs) -> CliResult<BenchReport> {
    check_k_list(&args.k)?;
    if args.methods.is_empty() {
        return Err(CliError::Config("method list is empty".into()));
    }
    let configs = args
        .methods
        .iter()
        .map(|&m| build_config(m, &args.params))
        .collect::<CliResult<Vec<_>>>()?;
    let ds = read_csv_path(&args.input)?;
    let queries = match &args.queries {
        Some(path) => read_rows_path(path)?,
        None => sample_queries(&ds, args.num_queries, args.params.seed),
    };
    let clustered = match configs.iter().find(|c| c.method != BuildMethod::Baseline) {
        Some(cfg) => Some(cluster(&ds, &cfg.dbscan, cfg.metric)?),
        None => None,
    };
    let search = SearchConfig {
        pruning: args.pruning.into(),
        parallel: true,
    };
    let mut methods = Vec::new();
    for cfg in &configs {
        let (forest, cost) = build(ds.clone(), cfg, clustered.as_ref())?;
        let blocks = run_queries(&forest, &queries, &args.k, args.oracle, search)?;
        let trees: Vec<_> = forest.trees.iter().map(GhTree::stats).collect();
        methods.push(MethodBench {
            method: cfg.method,
            totals: ForestTotals::of(&trees),
            plan: forest.plan_summary.clone(),
            build: BuildCostReport::from(cost),
            aggregates: blocks.into_iter().map(|b| b.aggregate).collect(),
        });
    }
    Ok(BenchReport {
        schema_version: SCHEMA_VERSION,
        metric: args.params.metric,
        seed: args.params.seed,
        dataset: DatasetInfo {
            objects: ds.len(),
            dimension: ds.dimension(),
        },
        clustering: clustered.as_ref().map(cluster_info),
        k_list: args.k.clone(),
        num_queries: queries.len(),
        methods,
    })
}

/// A random pair of balls in partial overlap, in `n` dimensions. `band`
/// places the center distance within `(|r1 - r2|, r1 + r2)` as a fraction of
/// that interval.
pub fn random_partial_pair(rng: &mut ChaCha8Rng, n: usize, band: std::ops::Range<f64>) -> (Ball, Ball, f64) {
    let r1 = rng.random_range(0.5..2.0);
    let r2 = rng.random_range(0.5..2.0);
    let lo = f64::abs(r1 - r2);
    let hi = r1 + r2;
    let d = lo + (hi - lo) * rng.random_range(band);
    let c1: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let mut dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    dir.iter_mut().for_each(|x| *x /= norm);
    let c2 = c1.iter().zip(&dir).map(|(a, u)| a + d * u).collect();
    // Recompute d from the placed centers so both sides see the same value.
    let b1 = Ball { center: c1, radius: r1 };
    let b2 = Ball { center: c2, radius: r2 };
    let d = ghforest_oracles::euclidean(&b1.center, &b2.center);
    (b1, b2, d)
}

pub fn lens_volume(b1: &Ball, b2: &Ball, d: f64) -> ghforest::Result<f64> {
    match vbm_rate(b1, b2, d)?.detail {
        OverlapDetail::Volume { lens, .. } => Ok(lens),
        _ => unreachable!("volume-based rate carries volume detail"),
    }
}

fn oracle_ball(b: &Ball) -> OracleBall {
    OracleBall {
        center: b.center.clone(),
        radius: b.radius,
    }
}

fn geometry_checks(args: &VerifyArgs) -> CliResult<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut checks = Vec::new();
    for n in [2, 3] {
        let mut worst = 0.0f64;
        for _ in 0..args.pairs {
            let (b1, b2, d) = random_partial_pair(&mut rng, n, 0.02..0.98);
            let ours = lens_volume(&b1, &b2, d)?;
            let exact = closed_form_lens(&oracle_ball(&b1), &oracle_ball(&b2)).expect("2-D and 3-D are supported");
            worst = worst.max((ours - exact).abs() / exact);
        }
        checks.push(Check {
            name: format!("lens_closed_form_{n}d"),
            passed: worst <= 1e-9,
            detail: format!("{} pairs, worst relative error {worst:.3e}", args.pairs),
        });
    }
    let mut worst = 0.0f64;
    let pairs = args.pairs.min(10);
    for i in 0..pairs {
        let (b1, b2, d) = random_partial_pair(&mut rng, 5, 0.02..0.98);
        let ours = lens_volume(&b1, &b2, d)?;
        let cfg = OracleConfig {
            mc_samples: args.mc_samples,
            rng_seed: args.seed.wrapping_add(i as u64),
        };
        let (est, _) = mc_lens_volume(&oracle_ball(&b1), &oracle_ball(&b2), &cfg);
        worst = worst.max((ours - est).abs() / est);
    }
    checks.push(Check {
        name: "lens_monte_carlo_5d".into(),
        passed: worst <= 0.02,
        detail: format!(
            "{pairs} pairs, {} samples, worst relative error {worst:.3e}",
            args.mc_samples
        ),
    });
    Ok(checks)
}

fn search_check(ds: &Dataset, args: &VerifyArgs) -> CliResult<Check> {
    let metric = Metric::Euclidean;
    let mut c = CostCounters::new();
    let group = IndexGroup::from_members(0, IndexKind::Cluster, ds.ids().collect(), ds, &metric, &mut c)?;
    let tree = GhTree::build(0, &group, ds, &metric, &mut c)?;
    let audit = tree.audit(ds, &metric);
    let queries = sample_queries(ds, args.num_queries, args.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 1);
    let mut mismatches = 0;
    for q in &queries {
        // Nudge each sampled object so queries are not all stored points.
        let q: Vec<f64> = q.iter().map(|x| x + rng.random_range(-0.05..0.05)).collect();
        for &k in &args.k {
            let r = tree.estimate_query_radius(ds, &q, k, &metric, &mut c)?.bound_for(k);
            let got = tree.knn_search(ds, &q, k, &metric, &mut c, r, Pruning::default())?;
            let want = oracle_hits(ds, &q, k);
            let same = got.len() == want.len() && got.iter().zip(&want).all(|(a, b)| a.distance == b.distance);
            mismatches += usize::from(!same);
        }
    }
    Ok(Check {
        name: "tree_knn_exact".into(),
        passed: mismatches == 0 && audit.is_clean(),
        detail: format!(
            "{} queries x k {:?}: {mismatches} mismatches; audit {audit:?}",
            queries.len(),
            args.k
        ),
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> CliResult<VerifyReport> {
    check_k_list(&args.k)?;
    if args.mc_samples < OracleConfig::MIN_ACCEPTANCE_SAMPLES {
        return Err(CliError::Config(format!(
            "--mc-samples must be at least {}",
            OracleConfig::MIN_ACCEPTANCE_SAMPLES
        )));
    }
    let mut checks = geometry_checks(args)?;
    let ds = match &args.input {
        Some(path) => read_csv_path(path)?,
        None => uniform(1000, 5, args.seed)?,
    };
    checks.push(search_check(&ds, args)?);
    Ok(VerifyReport {
        schema_version: SCHEMA_VERSION,
        seed: args.seed,
        checks,
    })
}
