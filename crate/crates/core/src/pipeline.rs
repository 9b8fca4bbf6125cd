//! Clustering, planning and tree construction wired together.

use serde::{Deserialize, Serialize};

use crate::dbscan::{absorb_noise, run_dbscan, DbscanParams, Partition};
use crate::error::Result;
use crate::forest::{BuildMethod, Forest};
use crate::metric::{CostCounters, Dataset, Metric};
use crate::planner::{plan_indexes, IndexPlan, Thresholds};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub method: BuildMethod,
    pub dbscan: DbscanParams,
    pub thresholds: Thresholds,
    pub metric: Metric,
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        self.dbscan.validate()?;
        self.thresholds.validate()
    }
}

/// Build cost by phase. The baseline has no clustering or planning cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildCost {
    pub clustering: CostCounters,
    pub planning: CostCounters,
    pub indexing: CostCounters,
}

impl BuildCost {
    pub fn total(&self) -> CostCounters {
        self.clustering + self.planning + self.indexing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustered {
    pub partitions: Vec<Partition>,
    /// Noise objects before absorption.
    pub noise: usize,
    pub counters: CostCounters,
}

/// DBSCAN followed by noise absorption.
pub fn cluster(ds: &Dataset, params: &DbscanParams, metric: Metric) -> Result<Clustered> {
    let mut counters = CostCounters::new();
    let clustering = run_dbscan(ds, params, &metric, &mut counters)?;
    let noise = clustering.noise.len();
    let partitions = absorb_noise(clustering.partitions, &clustering.noise, ds, &metric, &mut counters)?;
    Ok(Clustered {
        partitions,
        noise,
        counters,
    })
}

pub fn build_forest(ds: Dataset, cfg: &BuildConfig) -> Result<(Forest, BuildCost)> {
    cfg.validate()?;
    if cfg.method == BuildMethod::Baseline {
        return build_from_clusters(ds, cfg, None);
    }
    let clustered = cluster(&ds, &cfg.dbscan, cfg.metric)?;
    build_from_clusters(ds, cfg, Some(&clustered))
}

/// Builds from a clustering computed earlier, so several methods can share
/// one DBSCAN run. `clustered` is ignored for the baseline.
pub fn build_from_clusters(
    ds: Dataset,
    cfg: &BuildConfig,
    clustered: Option<&Clustered>,
) -> Result<(Forest, BuildCost)> {
    cfg.validate()?;
    let mut cost = BuildCost::default();
    let plan = match (cfg.method.overlap(), clustered) {
        (Some(method), Some(clustered)) => {
            cost.clustering = clustered.counters;
            plan_indexes(
                &clustered.partitions,
                method,
                cfg.thresholds,
                &ds,
                &cfg.metric,
                &mut cost.planning,
            )?
        }
        (Some(_), None) => {
            let clustered = cluster(&ds, &cfg.dbscan, cfg.metric)?;
            return build_from_clusters(ds, cfg, Some(&clustered));
        }
        (None, _) => IndexPlan::single(&ds, &cfg.metric, &mut cost.planning)?,
    };
    let forest = Forest::from_plan(cfg.method, cfg.metric, ds, plan, &mut cost.indexing)?;
    Ok((forest, cost))
}
