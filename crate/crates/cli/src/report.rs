//! JSON report schema.

use std::path::Path;

use ghforest::ght::TreeStats;
use ghforest::planner::PlanSummary;
use ghforest::{BuildCost, BuildMethod, CostCounters, Forest, Metric, QueryResult};
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub objects: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub partitions: usize,
    pub noise: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildCostReport {
    pub clustering: CostCounters,
    pub planning: CostCounters,
    /// Tree construction only.
    pub indexing: CostCounters,
    pub total: CostCounters,
}

impl From<BuildCost> for BuildCostReport {
    fn from(c: BuildCost) -> Self {
        Self {
            clustering: c.clustering,
            planning: c.planning,
            indexing: c.indexing,
            total: c.total(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ForestTotals {
    pub trees: usize,
    pub bridges: usize,
    pub objects: usize,
    pub internal_nodes: usize,
    pub leaves: usize,
    pub oversized_leaves: usize,
    pub max_height: usize,
}

impl ForestTotals {
    pub fn of(trees: &[TreeStats]) -> Self {
        let mut t = ForestTotals {
            trees: trees.len(),
            ..Default::default()
        };
        for s in trees {
            t.bridges += usize::from(s.kind == ghforest::IndexKind::OverlapBridge);
            t.objects += s.objects;
            t.internal_nodes += s.internal_nodes;
            t.leaves += s.leaves;
            t.oversized_leaves += s.oversized_leaves;
            t.max_height = t.max_height.max(s.height);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query: usize,
    pub k: usize,
    pub distances: u64,
    pub comparisons: u64,
    pub elapsed: f64,
    pub trees_searched: usize,
    pub hits: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

impl QueryRow {
    pub fn new(query: usize, k: usize, r: &QueryResult, recall: Option<f64>) -> Self {
        Self {
            query,
            k,
            distances: r.counters.distance_count,
            comparisons: r.counters.comparison_count,
            elapsed: r.elapsed,
            trees_searched: r.searched_tree_ids.len(),
            hits: r.hits.len(),
            recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub k: usize,
    pub queries: usize,
    pub mean_distances: f64,
    pub mean_comparisons: f64,
    pub mean_elapsed: f64,
    pub median_elapsed: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_recall: Option<f64>,
}

impl Aggregate {
    pub fn of(k: usize, rows: &[QueryRow]) -> Self {
        let n = rows.len().max(1) as f64;
        let mean = |f: &dyn Fn(&QueryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
        let mut elapsed: Vec<f64> = rows.iter().map(|r| r.elapsed).collect();
        elapsed.sort_by(f64::total_cmp);
        let median = match elapsed.len() {
            0 => 0.0,
            m if m % 2 == 1 => elapsed[m / 2],
            m => (elapsed[m / 2 - 1] + elapsed[m / 2]) / 2.0,
        };
        let recalls: Option<Vec<f64>> = rows.iter().map(|r| r.recall).collect();
        let recalls = recalls.filter(|r| !r.is_empty());
        Self {
            k,
            queries: rows.len(),
            mean_distances: mean(&|r| r.distances as f64),
            mean_comparisons: mean(&|r| r.comparisons as f64),
            mean_elapsed: mean(&|r| r.elapsed),
            median_elapsed: median,
            mean_recall: recalls.as_ref().map(|r| r.iter().sum::<f64>() / r.len() as f64),
            min_recall: recalls.map(|r| r.into_iter().fold(f64::INFINITY, f64::min)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBlock {
    pub k: usize,
    pub rows: Vec<QueryRow>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub schema_version: u32,
    pub method: BuildMethod,
    pub metric: Metric,
    pub seed: u64,
    pub dataset: DatasetInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clustering: Option<ClusterInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSummary>,
    pub totals: ForestTotals,
    pub trees: Vec<TreeStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub build: Option<BuildCostReport>,
    pub queries: Vec<QueryBlock>,
}

impl StatsReport {
    pub fn for_forest(forest: &Forest, seed: u64) -> Self {
        let trees: Vec<TreeStats> = forest.trees.iter().map(|t| t.stats()).collect();
        Self {
            schema_version: SCHEMA_VERSION,
            method: forest.method,
            metric: forest.metric,
            seed,
            dataset: DatasetInfo {
                objects: forest.dataset.len(),
                dimension: forest.dataset.dimension(),
            },
            clustering: None,
            plan: forest.plan_summary.clone(),
            totals: ForestTotals::of(&trees),
            trees,
            build: None,
            queries: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodBench {
    pub method: BuildMethod,
    pub totals: ForestTotals,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanSummary>,
    pub build: BuildCostReport,
    pub aggregates: Vec<Aggregate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema_version: u32,
    pub metric: Metric,
    pub seed: u64,
    pub dataset: DatasetInfo,
    pub clustering: Option<ClusterInfo>,
    pub k_list: Vec<usize>,
    pub num_queries: usize,
    pub methods: Vec<MethodBench>,
}

impl BenchReport {
    pub fn method(&self, m: BuildMethod) -> Option<&MethodBench> {
        self.methods.iter().find(|b| b.method == m)
    }
}

impl MethodBench {
    pub fn at_k(&self, k: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.k == k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub seed: u64,
    pub checks: Vec<Check>,
}

pub fn write_rows_csv(blocks: &[QueryBlock], path: &Path) -> CliResult<()> {
    let err = |e: csv::Error| CliError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for row in blocks.iter().flat_map(|b| &b.rows) {
        w.serialize(row).map_err(err)?;
    }
    w.flush().map_err(|e| CliError::Data(e.to_string()))
}
