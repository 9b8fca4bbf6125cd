//! Density clustering that seeds the partitions.
//!
//! Classic DBSCAN with linear-scan neighbourhood queries, objects visited in
//! id order and seeds expanded first-in first-out. Each resulting cluster is
//! summarised as a ball: the centroid of its members and the largest member
//! distance from it.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Region;
use crate::metric::{covering_radius, CostCounters, Dataset, DistanceFn, ObjectId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub epsilon: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(epsilon: f64, min_pts: usize) -> Result<Self> {
        let p = Self { epsilon, min_pts };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon <= 0.0 || !self.epsilon.is_finite() {
            return Err(Error::param(
                "epsilon",
                format!("{} must be a positive real", self.epsilon),
            ));
        }
        if self.min_pts == 0 {
            return Err(Error::param("min_pts", "must be at least 1"));
        }
        Ok(())
    }
}

/// Cluster id 0 is reserved for noise; clusters are numbered from 1.
pub type ClusterId = u32;
pub const NOISE: ClusterId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Undefined,
    Noise,
    Cluster(ClusterId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub id: ClusterId,
    /// Sorted ascending.
    pub members: Vec<ObjectId>,
    pub pivot: Vec<f64>,
    pub radius: f64,
}

impl Partition {
    /// Summarises `members` as centroid + covering radius.
    pub fn from_members(
        id: ClusterId,
        mut members: Vec<ObjectId>,
        ds: &Dataset,
        metric: &dyn DistanceFn,
        counters: &mut CostCounters,
    ) -> Result<Self> {
        members.sort_unstable();
        let pivot = ds.centroid_of(&members)?;
        let radius = covering_radius(ds, &members, &pivot, metric, counters);
        Ok(Self {
            id,
            members,
            pivot,
            radius,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

impl Region for Partition {
    fn center(&self) -> &[f64] {
        &self.pivot
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn members(&self) -> &[ObjectId] {
        &self.members
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub partitions: Vec<Partition>,
    pub noise: Vec<ObjectId>,
    /// Per-object cluster id, [`NOISE`] for noise.
    pub labels: Vec<ClusterId>,
}

/// All objects within `eps` of `o`, `o` included, in id order.
pub fn epsilon_neighborhood(
    ds: &Dataset,
    o: ObjectId,
    eps: f64,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Vec<ObjectId> {
    let center = ds.coords(o);
    ds.ids()
        .filter(|&q| {
            let d = counters.measure(metric, center, ds.coords(q));
            counters.le(d, eps)
        })
        .collect()
}

pub fn run_dbscan(
    ds: &Dataset,
    params: &DbscanParams,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<Clustering> {
    params.validate()?;
    let mut labels = vec![Label::Undefined; ds.len()];
    let mut next_id: ClusterId = NOISE + 1;
    for o in ds.ids() {
        if labels[o] == Label::Undefined && expand_cluster(ds, o, next_id, params, metric, counters, &mut labels) {
            next_id += 1;
        }
    }

    let mut members: Vec<Vec<ObjectId>> = vec![Vec::new(); (next_id - 1) as usize];
    let mut noise = Vec::new();
    let flat: Vec<ClusterId> = labels
        .iter()
        .enumerate()
        .map(|(o, l)| match *l {
            Label::Cluster(c) => {
                members[(c - 1) as usize].push(o);
                c
            }
            _ => {
                noise.push(o);
                NOISE
            }
        })
        .collect();

    let partitions = members
        .into_iter()
        .enumerate()
        .map(|(i, m)| Partition::from_members(i as ClusterId + 1, m, ds, metric, counters))
        .collect::<Result<Vec<_>>>()?;
    Ok(Clustering {
        partitions,
        noise,
        labels: flat,
    })
}

fn expand_cluster(
    ds: &Dataset,
    o: ObjectId,
    id: ClusterId,
    params: &DbscanParams,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
    labels: &mut [Label],
) -> bool {
    let seeds = epsilon_neighborhood(ds, o, params.epsilon, metric, counters);
    if seeds.len() < params.min_pts {
        labels[o] = Label::Noise;
        return false;
    }
    let mut queue = VecDeque::with_capacity(seeds.len());
    for &s in &seeds {
        if matches!(labels[s], Label::Undefined | Label::Noise) {
            if s != o && labels[s] == Label::Undefined {
                queue.push_back(s);
            }
            labels[s] = Label::Cluster(id);
        }
    }
    while let Some(p) = queue.pop_front() {
        let result = epsilon_neighborhood(ds, p, params.epsilon, metric, counters);
        if result.len() < params.min_pts {
            continue;
        }
        for r in result {
            match labels[r] {
                Label::Undefined => {
                    queue.push_back(r);
                    labels[r] = Label::Cluster(id);
                }
                Label::Noise => labels[r] = Label::Cluster(id),
                Label::Cluster(_) => {}
            }
        }
    }
    true
}

/// Routes every noise object to the partition with the nearest pivot, then
/// recomputes pivots and radii of the partitions that grew. With no
/// partitions at all, the noise becomes a single fallback partition.
pub fn absorb_noise(
    mut partitions: Vec<Partition>,
    noise: &[ObjectId],
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<Vec<Partition>> {
    if noise.is_empty() {
        return Ok(partitions);
    }
    if partitions.is_empty() {
        return Ok(vec![Partition::from_members(1, noise.to_vec(), ds, metric, counters)?]);
    }
    let mut grown = vec![false; partitions.len()];
    let mut additions: Vec<Vec<ObjectId>> = vec![Vec::new(); partitions.len()];
    for &o in noise {
        let x = ds.coords(o);
        let mut best = (0, f64::INFINITY);
        for (i, p) in partitions.iter().enumerate() {
            let d = counters.measure(metric, x, &p.pivot);
            if counters.lt(d, best.1) {
                best = (i, d);
            }
        }
        additions[best.0].push(o);
        grown[best.0] = true;
    }
    for (i, extra) in additions.into_iter().enumerate() {
        if grown[i] {
            let p = &partitions[i];
            let mut members = p.members.clone();
            members.extend(extra);
            partitions[i] = Partition::from_members(p.id, members, ds, metric, counters)?;
        }
    }
    Ok(partitions)
}
