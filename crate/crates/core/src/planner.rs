//! Turns DBSCAN partitions into index groups.
//!
//! Pairs of cluster groups are scored with one overlap method and classified
//! against `xi_min`/`xi_max`. Each round either merges every highly
//! overlapping pair (transitively), or, when none is left, extracts medium
//! overlaps into bridge groups and hands the shared objects of low overlaps
//! to one side. Rounds repeat until nothing changes, at most
//! [`MAX_ROUNDS`] times.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::dbscan::Partition;
use crate::error::{Error, Result};
use crate::geometry::{
    cap_geometry, dbm_rate, obm_rate, shared_objects, vbm_rate, Ball, OverlapMethod, OverlapRegime, OverlapReport,
    Region,
};
use crate::metric::{covering_radius, CostCounters, Dataset, DistanceFn, ObjectId};

pub const MAX_ROUNDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub xi_min: f64,
    pub xi_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            xi_min: 0.4,
            xi_max: 0.8,
        }
    }
}

impl Thresholds {
    pub fn new(xi_min: f64, xi_max: f64) -> Result<Self> {
        let t = Self { xi_min, xi_max };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("xi_min", self.xi_min), ("xi_max", self.xi_max)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        if self.xi_min > self.xi_max {
            return Err(Error::param(
                "xi_min",
                format!("{} exceeds xi_max {}", self.xi_min, self.xi_max),
            ));
        }
        Ok(())
    }

    pub fn classify(&self, rate: f64) -> OverlapLevel {
        if rate < self.xi_min {
            OverlapLevel::Low
        } else if rate < self.xi_max {
            OverlapLevel::Medium
        } else {
            OverlapLevel::High
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapLevel {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexKind {
    Cluster,
    OverlapBridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexGroup {
    pub id: usize,
    pub kind: IndexKind,
    /// Sorted ascending.
    pub members: Vec<ObjectId>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl IndexGroup {
    pub fn from_members(
        id: usize,
        kind: IndexKind,
        mut members: Vec<ObjectId>,
        ds: &Dataset,
        metric: &dyn DistanceFn,
        counters: &mut CostCounters,
    ) -> Result<Self> {
        members.sort_unstable();
        let center = ds.centroid_of(&members)?;
        let radius = covering_radius(ds, &members, &center, metric, counters);
        Ok(Self {
            id,
            kind,
            members,
            center,
            radius,
        })
    }

    fn refresh(&mut self, ds: &Dataset, metric: &dyn DistanceFn, counters: &mut CostCounters) -> Result<()> {
        self.members.sort_unstable();
        if self.members.is_empty() {
            self.radius = 0.0;
            return Ok(());
        }
        self.center = ds.centroid_of(&self.members)?;
        self.radius = covering_radius(ds, &self.members, &self.center, metric, counters);
        Ok(())
    }
}

impl Region for IndexGroup {
    fn center(&self) -> &[f64] {
        &self.center
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn members(&self) -> &[ObjectId] {
        &self.members
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub rounds: usize,
    pub pairs_scored: usize,
    pub low_pairs: usize,
    pub medium_pairs: usize,
    pub high_pairs: usize,
    /// Groups absorbed into another group.
    pub merges: usize,
    pub bridges_created: usize,
    pub bridges_dissolved: usize,
    pub transfers: usize,
    pub transferred_objects: usize,
    pub neighbor_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexPlan {
    pub groups: Vec<IndexGroup>,
    /// `neighbors[i]` lists indices into `groups`, sorted; the relation is
    /// symmetric.
    pub neighbors: Vec<Vec<usize>>,
    pub summary: PlanSummary,
}

impl IndexPlan {
    /// One cluster group over the whole dataset.
    pub fn single(ds: &Dataset, metric: &dyn DistanceFn, counters: &mut CostCounters) -> Result<Self> {
        let group = IndexGroup::from_members(0, IndexKind::Cluster, ds.ids().collect(), ds, metric, counters)?;
        Ok(Self {
            groups: vec![group],
            neighbors: vec![Vec::new()],
            summary: PlanSummary::default(),
        })
    }

    /// Every object exactly once across all groups.
    pub fn is_partition_of(&self, ds: &Dataset) -> bool {
        let mut seen = vec![false; ds.len()];
        for g in &self.groups {
            for &o in &g.members {
                if o >= seen.len() || std::mem::replace(&mut seen[o], true) {
                    return false;
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

fn ball<R: Region + ?Sized>(r: &R) -> Ball {
    Ball {
        center: r.center().to_vec(),
        radius: r.radius(),
    }
}

/// Overlap between two regions, including the center-distance evaluation.
pub fn score_pair<A: Region + ?Sized, B: Region + ?Sized>(
    a: &A,
    b: &B,
    method: OverlapMethod,
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<OverlapReport> {
    let dist = counters.measure(metric, a.center(), b.center());
    match method {
        OverlapMethod::Vbm => vbm_rate(&ball(a), &ball(b), dist),
        OverlapMethod::Dbm => dbm_rate(&ball(a), &ball(b), dist),
        OverlapMethod::Obm => obm_rate(a, b, ds, dist, metric, counters),
    }
}

struct Work<'a> {
    groups: BTreeMap<usize, IndexGroup>,
    edges: BTreeSet<(usize, usize)>,
    next_id: usize,
    summary: PlanSummary,
    ds: &'a Dataset,
    metric: &'a dyn DistanceFn,
    method: OverlapMethod,
}

fn edge(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl Work<'_> {
    fn clusters(&self) -> Vec<usize> {
        self.groups
            .values()
            .filter(|g| g.kind == IndexKind::Cluster)
            .map(|g| g.id)
            .collect()
    }

    fn score(&mut self, a: usize, b: usize, counters: &mut CostCounters) -> Result<OverlapReport> {
        self.summary.pairs_scored += 1;
        score_pair(
            &self.groups[&a],
            &self.groups[&b],
            self.method,
            self.ds,
            self.metric,
            counters,
        )
    }

    fn neighbors_of(&self, id: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(x, y)| {
                if x == id {
                    Some(y)
                } else if y == id {
                    Some(x)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Moves all members and edges of `from` into `into`; does not refresh.
    fn absorb(&mut self, into: usize, from: usize) {
        let gone = self.groups.remove(&from).expect("live group");
        self.groups
            .get_mut(&into)
            .expect("live group")
            .members
            .extend(gone.members);
        for n in self.neighbors_of(from) {
            self.edges.remove(&edge(from, n));
            if n != into {
                self.edges.insert(edge(into, n));
            }
        }
    }

    fn merge_components(&mut self, pairs: &[(usize, usize)], counters: &mut CostCounters) -> Result<()> {
        let ids: Vec<usize> = self.groups.keys().copied().collect();
        let index: BTreeMap<usize, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut parent: Vec<usize> = (0..ids.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in pairs {
            let (ra, rb) = (find(&mut parent, index[&a]), find(&mut parent, index[&b]));
            if ra != rb {
                // Keep the smaller id as the representative.
                let (lo, hi) = (ra.min(rb), ra.max(rb));
                parent[hi] = lo;
            }
        }
        let mut touched = BTreeSet::new();
        for (i, &id) in ids.iter().enumerate() {
            let root = find(&mut parent, i);
            if root != i {
                self.absorb(ids[root], id);
                self.summary.merges += 1;
                touched.insert(ids[root]);
            }
        }
        for id in touched {
            self.refresh(id, counters)?;
        }
        Ok(())
    }

    fn refresh(&mut self, id: usize, counters: &mut CostCounters) -> Result<()> {
        let (ds, metric) = (self.ds, self.metric);
        self.groups
            .get_mut(&id)
            .expect("live group")
            .refresh(ds, metric, counters)
    }

    fn take_members(&mut self, id: usize, moving: &BTreeSet<ObjectId>) {
        self.groups
            .get_mut(&id)
            .expect("live group")
            .members
            .retain(|o| !moving.contains(o));
    }

    /// Medium pair: shared objects become a bridge group between the two.
    fn extract_bridge(&mut self, a: usize, b: usize, counters: &mut CostCounters) -> Result<bool> {
        let shared = shared_objects(&self.groups[&a], &self.groups[&b], self.ds, self.metric, counters);
        if shared.is_empty() {
            return Ok(false);
        }
        let moving: BTreeSet<ObjectId> = shared.iter().copied().collect();
        let empties = |g: &IndexGroup| g.members.iter().all(|o| moving.contains(o));
        if empties(&self.groups[&a]) || empties(&self.groups[&b]) {
            self.merge_components(&[(a, b)], counters)?;
            return Ok(true);
        }
        self.take_members(a, &moving);
        self.take_members(b, &moving);
        self.refresh(a, counters)?;
        self.refresh(b, counters)?;
        let id = self.next_id;
        self.next_id += 1;
        let bridge = IndexGroup::from_members(id, IndexKind::OverlapBridge, shared, self.ds, self.metric, counters)?;
        self.groups.insert(id, bridge);
        self.edges.insert(edge(a, id));
        self.edges.insert(edge(b, id));
        self.summary.bridges_created += 1;
        Ok(true)
    }

    /// Low pair: objects of the side with the shallower cap that also lie in
    /// the other ball move to the other side.
    fn transfer(&mut self, a: usize, b: usize, counters: &mut CostCounters) -> Result<bool> {
        let (ba, bb) = (ball(&self.groups[&a]), ball(&self.groups[&b]));
        let dist = counters.measure(self.metric, &ba.center, &bb.center);
        let ha = cap_geometry(&ba, &bb, dist)?.height;
        let hb = cap_geometry(&bb, &ba, dist)?.height;
        let (giver, taker) = if counters.le(ha, hb) { (a, b) } else { (b, a) };
        let target = ball(&self.groups[&taker]);
        let moving: BTreeSet<ObjectId> = self.groups[&giver]
            .members
            .iter()
            .copied()
            .filter(|&o| {
                let d = counters.measure(self.metric, self.ds.coords(o), &target.center);
                counters.le(d, target.radius)
            })
            .collect();
        if moving.is_empty() {
            return Ok(false);
        }
        self.take_members(giver, &moving);
        self.groups
            .get_mut(&taker)
            .expect("live group")
            .members
            .extend(moving.iter().copied());
        self.refresh(giver, counters)?;
        self.refresh(taker, counters)?;
        self.summary.transfers += 1;
        self.summary.transferred_objects += moving.len();
        Ok(true)
    }

    /// Drops empty groups and dissolves bridges that lost a parent.
    fn normalize(&mut self, counters: &mut CostCounters) -> Result<()> {
        let empty: Vec<usize> = self
            .groups
            .values()
            .filter(|g| g.members.is_empty())
            .map(|g| g.id)
            .collect();
        for id in empty {
            self.groups.remove(&id);
            self.edges.retain(|&(x, y)| x != id && y != id);
        }
        loop {
            let orphan = self.groups.values().find(|g| {
                g.kind == IndexKind::OverlapBridge
                    && self
                        .neighbors_of(g.id)
                        .iter()
                        .filter(|n| self.groups[n].kind == IndexKind::Cluster)
                        .count()
                        < 2
            });
            let Some(orphan) = orphan.map(|g| g.id) else {
                break;
            };
            self.summary.bridges_dissolved += 1;
            match self.neighbors_of(orphan).first() {
                Some(&into) => {
                    self.absorb(into, orphan);
                    self.refresh(into, counters)?;
                }
                None => self.groups.get_mut(&orphan).expect("live group").kind = IndexKind::Cluster,
            }
        }
        Ok(())
    }
}

/// Builds an index plan from partitions. Partition order fixes group ids.
pub fn plan_indexes(
    partitions: &[Partition],
    method: OverlapMethod,
    thresholds: Thresholds,
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<IndexPlan> {
    thresholds.validate()?;
    if partitions.is_empty() {
        return Err(Error::Empty("no partitions to plan"));
    }
    let groups: BTreeMap<usize, IndexGroup> = partitions
        .iter()
        .enumerate()
        .map(|(i, p)| {
            (
                i,
                IndexGroup {
                    id: i,
                    kind: IndexKind::Cluster,
                    members: p.members.clone(),
                    center: p.pivot.clone(),
                    radius: p.radius,
                },
            )
        })
        .collect();
    let mut work = Work {
        next_id: groups.len(),
        groups,
        edges: BTreeSet::new(),
        summary: PlanSummary::default(),
        ds,
        metric,
        method,
    };
    work.normalize(counters)?;

    for _ in 0..MAX_ROUNDS {
        work.summary.rounds += 1;
        let ids = work.clusters();
        let mut scored = Vec::new();
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let report = work.score(a, b, counters)?;
                let level = thresholds.classify(report.rate);
                match level {
                    OverlapLevel::Low => work.summary.low_pairs += 1,
                    OverlapLevel::Medium => work.summary.medium_pairs += 1,
                    OverlapLevel::High => work.summary.high_pairs += 1,
                }
                scored.push((report.rate, a, b, level, report.regime));
            }
        }
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then((x.1, x.2).cmp(&(y.1, y.2))));

        let highs: Vec<(usize, usize)> = scored
            .iter()
            .filter(|s| s.3 == OverlapLevel::High)
            .map(|s| (s.1, s.2))
            .collect();
        let mut changed = false;
        if !highs.is_empty() {
            work.merge_components(&highs, counters)?;
            changed = true;
        } else {
            for level in [OverlapLevel::Medium, OverlapLevel::Low] {
                for &(_, a, b, lv, regime) in &scored {
                    if lv != level || regime != OverlapRegime::PartialOverlap {
                        continue;
                    }
                    let alive = |id| work.groups.get(&id).is_some_and(|g| g.kind == IndexKind::Cluster);
                    if !alive(a) || !alive(b) {
                        continue;
                    }
                    // Earlier actions may have moved either ball.
                    let now = work.score(a, b, counters)?;
                    if now.regime != OverlapRegime::PartialOverlap || thresholds.classify(now.rate) != level {
                        continue;
                    }
                    changed |= match level {
                        OverlapLevel::Medium => work.extract_bridge(a, b, counters)?,
                        _ => work.transfer(a, b, counters)?,
                    };
                }
            }
        }
        work.normalize(counters)?;
        if !changed {
            break;
        }
    }

    let order: Vec<usize> = work.groups.keys().copied().collect();
    let index: BTreeMap<usize, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut neighbors = vec![Vec::new(); order.len()];
    for &(x, y) in &work.edges {
        neighbors[index[&x]].push(index[&y]);
        neighbors[index[&y]].push(index[&x]);
    }
    for n in &mut neighbors {
        n.sort_unstable();
    }
    work.summary.neighbor_edges = work.edges.len();
    Ok(IndexPlan {
        groups: work.groups.into_values().collect(),
        neighbors,
        summary: work.summary,
    })
}
