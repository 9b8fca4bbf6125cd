//! A forest of GH-trees and routed kNN search.
//!
//! A query goes to the tree whose center is closest, plus that tree's
//! neighbours. Each selected tree is searched independently with its own
//! counters; the answers are merged into one top-k. If the selected trees
//! hold fewer than `k` objects, the remaining trees are searched by
//! ascending center distance until `k` hits exist.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OverlapMethod;
use crate::ght::{GhTree, Hit, Pruning};
use crate::metric::{CostCounters, Dataset, DistanceFn, Metric};
use crate::planner::{IndexPlan, PlanSummary};

pub const ARTIFACT_MAGIC: &str = "GHFOREST v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildMethod {
    Vbm,
    Dbm,
    Obm,
    Baseline,
}

impl BuildMethod {
    pub const ALL: [BuildMethod; 4] = [
        BuildMethod::Vbm,
        BuildMethod::Dbm,
        BuildMethod::Obm,
        BuildMethod::Baseline,
    ];

    /// The overlap heuristic behind the method; `None` for the baseline.
    pub fn overlap(self) -> Option<OverlapMethod> {
        match self {
            BuildMethod::Vbm => Some(OverlapMethod::Vbm),
            BuildMethod::Dbm => Some(OverlapMethod::Dbm),
            BuildMethod::Obm => Some(OverlapMethod::Obm),
            BuildMethod::Baseline => None,
        }
    }
}

impl fmt::Display for BuildMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.overlap() {
            Some(m) => m.fmt(f),
            None => f.write_str("baseline"),
        }
    }
}

impl FromStr for BuildMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("baseline") {
            return Ok(BuildMethod::Baseline);
        }
        Ok(match s.parse::<OverlapMethod>()? {
            OverlapMethod::Vbm => BuildMethod::Vbm,
            OverlapMethod::Dbm => BuildMethod::Dbm,
            OverlapMethod::Obm => BuildMethod::Obm,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub method: BuildMethod,
    pub metric: Metric,
    pub dataset: Dataset,
    pub trees: Vec<GhTree>,
    pub plan_summary: Option<PlanSummary>,
}

impl Forest {
    /// One tree per plan group; tree ids follow group order. Trees are built
    /// concurrently, each with private counters that are summed afterwards.
    pub fn from_plan(
        method: BuildMethod,
        metric: Metric,
        dataset: Dataset,
        plan: IndexPlan,
        counters: &mut CostCounters,
    ) -> Result<Self> {
        if plan.groups.is_empty() {
            return Err(Error::Empty("index plan"));
        }
        let built: Vec<(Result<GhTree>, CostCounters)> = plan
            .groups
            .par_iter()
            .enumerate()
            .map(|(i, g)| {
                let mut c = CostCounters::new();
                (GhTree::build(i, g, &dataset, &metric, &mut c), c)
            })
            .collect();
        let mut trees = Vec::with_capacity(built.len());
        for (tree, c) in built {
            *counters += c;
            trees.push(tree?);
        }
        for (tree, ns) in trees.iter_mut().zip(&plan.neighbors) {
            tree.neighbors = ns.clone();
        }
        let plan_summary = (method != BuildMethod::Baseline).then_some(plan.summary);
        Ok(Self {
            method,
            metric,
            dataset,
            trees,
            plan_summary,
        })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    /// Writes the versioned artifact: a magic line followed by JSON.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{ARTIFACT_MAGIC}")?;
        serde_json::to_writer(&mut out, self).map_err(|e| Error::Artifact(e.to_string()))?;
        writeln!(out)?;
        Ok(())
    }

    pub fn load<R: BufRead>(mut input: R) -> Result<Self> {
        let mut magic = String::new();
        input.read_line(&mut magic)?;
        if magic.trim_end() != ARTIFACT_MAGIC {
            return Err(Error::Artifact(format!(
                "expected header `{ARTIFACT_MAGIC}`, found `{}`",
                magic.trim_end()
            )));
        }
        let forest: Forest = serde_json::from_reader(input).map_err(|e| Error::Artifact(e.to_string()))?;
        forest.validate()?;
        Ok(forest)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Artifact("forest has no trees".into()));
        }
        for (i, t) in self.trees.iter().enumerate() {
            if t.id != i || t.neighbors.iter().any(|&n| n >= self.trees.len() || n == i) {
                return Err(Error::Artifact(format!("tree {i} has inconsistent ids")));
            }
            if t.center.len() != self.dataset.dimension() {
                return Err(Error::Artifact(format!("tree {i} center has wrong dimension")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub pruning: Pruning,
    /// Search the selected trees on the rayon pool rather than in sequence.
    pub parallel: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            pruning: Pruning::default(),
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSearch {
    pub tree_id: usize,
    pub counters: CostCounters,
    pub hits: usize,
    /// Searched by the completion fallback rather than routing.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
    pub searched_tree_ids: Vec<usize>,
    /// Selection plus all per-tree searches.
    pub counters: CostCounters,
    pub selection: CostCounters,
    pub per_tree: Vec<TreeSearch>,
    /// Wall time in seconds.
    pub elapsed: f64,
}

/// Closest tree by center distance (ties to the lower id) followed by its
/// neighbours. Also returns every tree's center distance.
pub fn select_indexes(
    forest: &Forest,
    q: &[f64],
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if forest.trees.is_empty() {
        return Err(Error::Empty("forest"));
    }
    forest.dataset.check_dimension(q)?;
    let mut dists = Vec::with_capacity(forest.trees.len());
    let mut best = (0, f64::INFINITY);
    for (i, t) in forest.trees.iter().enumerate() {
        let d = counters.measure(metric, q, &t.center);
        if counters.lt(d, best.1) {
            best = (i, d);
        }
        dists.push(d);
    }
    let mut selected = vec![best.0];
    selected.extend(forest.trees[best.0].neighbors.iter().copied());
    Ok((selected, dists))
}

fn search_tree(
    forest: &Forest,
    tree: &GhTree,
    q: &[f64],
    k: usize,
    metric: &dyn DistanceFn,
    pruning: Pruning,
) -> Result<(Vec<Hit>, CostCounters)> {
    let mut c = CostCounters::new();
    let r = tree
        .estimate_query_radius(&forest.dataset, q, k, metric, &mut c)?
        .bound_for(k);
    let hits = tree.knn_search(&forest.dataset, q, k, metric, &mut c, r, pruning)?;
    Ok((hits, c))
}

pub fn forest_knn(
    forest: &Forest,
    q: &[f64],
    k: usize,
    metric: &dyn DistanceFn,
    config: SearchConfig,
) -> Result<QueryResult> {
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    let start = Instant::now();
    let mut selection = CostCounters::new();
    let (selected, center_dists) = select_indexes(forest, q, metric, &mut selection)?;

    let run = |&i: &usize| search_tree(forest, &forest.trees[i], q, k, metric, config.pruning);
    let outcomes: Vec<Result<(Vec<Hit>, CostCounters)>> = if config.parallel && selected.len() > 1 {
        selected.par_iter().map(run).collect()
    } else {
        selected.iter().map(run).collect()
    };

    let mut hits = Vec::new();
    let mut per_tree = Vec::new();
    for (&tree_id, outcome) in selected.iter().zip(outcomes) {
        let (h, counters) = outcome?;
        per_tree.push(TreeSearch {
            tree_id,
            counters,
            hits: h.len(),
            fallback: false,
        });
        hits.extend(h);
    }

    if hits.len() < k {
        let mut rest: Vec<usize> = (0..forest.trees.len()).filter(|i| !selected.contains(i)).collect();
        rest.sort_by(|&a, &b| center_dists[a].total_cmp(&center_dists[b]).then(a.cmp(&b)));
        for tree_id in rest {
            if hits.len() >= k {
                break;
            }
            let (h, counters) = search_tree(forest, &forest.trees[tree_id], q, k, metric, config.pruning)?;
            per_tree.push(TreeSearch {
                tree_id,
                counters,
                hits: h.len(),
                fallback: true,
            });
            hits.extend(h);
        }
    }

    hits.sort();
    let before = hits.len();
    hits.dedup_by_key(|h| h.id);
    debug_assert_eq!(before, hits.len(), "trees share objects");
    hits.truncate(k);

    let counters = selection + per_tree.iter().map(|t| t.counters).sum::<CostCounters>();
    Ok(QueryResult {
        hits,
        searched_tree_ids: per_tree.iter().map(|t| t.tree_id).collect(),
        counters,
        selection,
        per_tree,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Share of the oracle's answers matched by `hits`, comparing distance
/// multisets so that ties at the k-th distance count as matches.
pub fn recall_at_k(hits: &[Hit], oracle: &[Hit]) -> Result<f64> {
    if hits.len() != oracle.len() {
        return Err(Error::param(
            "oracle",
            format!("{} hits against {} oracle answers", hits.len(), oracle.len()),
        ));
    }
    if oracle.is_empty() {
        return Ok(1.0);
    }
    let sorted = |xs: &[Hit]| {
        let mut d: Vec<f64> = xs.iter().map(|h| h.distance).collect();
        d.sort_by(f64::total_cmp);
        d
    };
    let (a, b) = (sorted(hits), sorted(oracle));
    let same = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0);
    let (mut i, mut j, mut matched) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        if same(a[i], b[j]) {
            matched += 1;
            i += 1;
            j += 1;
        } else if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    Ok(matched as f64 / oracle.len() as f64)
}
