//! Generalized-hyperplane tree with bucket leaves.
//!
//! Internal nodes hold two pivots copied from member objects together with
//! the covering radius of each side: `r1` bounds the left subtree around
//! `p1`, `r2` the right subtree around `p2`. Objects go left when
//! `d(o, p1) <= d(o, p2)`. Leaves hold at most `c_max = ⌈√n⌉` object ids,
//! except where a set cannot be split (all points identical, or a split
//! that leaves one side empty); such leaves are flagged as oversized.
//!
//! Search is best-first over child lower bounds with a bounded max-heap of
//! candidates, seeded with an upper bound on the k-th distance.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{CostCounters, Dataset, DistanceFn, ObjectId};
use crate::planner::{IndexGroup, IndexKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        p1: Vec<f64>,
        p2: Vec<f64>,
        r1: f64,
        r2: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        bucket: Vec<ObjectId>,
        oversized: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhTree {
    pub id: usize,
    pub kind: IndexKind,
    /// Node arena; children always have larger indices than their parent.
    nodes: Vec<Node>,
    size: usize,
    c_max: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Ids of neighbouring trees in the same forest.
    pub neighbors: Vec<usize>,
}

/// A search answer: object id and its distance to the query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub id: ObjectId,
    pub distance: f64,
}

impl Hit {
    pub fn cmp_by_distance(&self, other: &Self) -> Ordering {
        self.distance.total_cmp(&other.distance).then(self.id.cmp(&other.id))
    }
}

impl Eq for Hit {}

impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Hit {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cmp_by_distance(other)
    }
}

/// How children are discarded during [`GhTree::knn_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pruning {
    /// Visit every node.
    Off,
    /// Child bound `max(0, d(q, p_i) - r_i)`.
    #[default]
    CoveringRadius,
    /// Covering-radius bound, tightened by the hyperplane bound; see
    /// [`child_bounds`].
    CoveringAndHyperplane,
}

/// Upper bound on the k-th neighbour distance read off a single bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusEstimate {
    pub radius: f64,
    /// Members of the bucket the estimate came from.
    pub bucket_len: usize,
}

impl RadiusEstimate {
    /// The estimate bounds the tree-wide k-th distance only when the bucket
    /// held at least `k` objects.
    pub fn bound_for(&self, k: usize) -> f64 {
        if self.bucket_len >= k {
            self.radius
        } else {
            f64::INFINITY
        }
    }
}

/// Farthest-point pivot pair: from the lowest id find the farthest object
/// `a`, then from `a` the farthest `b`. Ties keep the lower id.
pub fn select_pivots(
    ids: &[ObjectId],
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> Result<(ObjectId, ObjectId)> {
    let first = *ids.iter().min().ok_or(Error::Empty("pivot selection"))?;
    let farthest_from = |from: ObjectId, counters: &mut CostCounters| {
        let x = ds.coords(from);
        let mut best = (from, 0.0);
        for &o in ids {
            if o == from {
                continue;
            }
            let d = counters.measure(metric, x, ds.coords(o));
            if counters.gt(d, best.1) || (d == best.1 && o < best.0 && best.1 > 0.0) {
                best = (o, d);
            }
        }
        best
    };
    let (a, da) = farthest_from(first, counters);
    if da == 0.0 {
        return Err(Error::Unsplittable);
    }
    let (b, _) = farthest_from(a, counters);
    Ok((a, b))
}

/// Generalized-hyperplane split. Ties go left. Also returns the covering
/// radius of each side around its pivot, read off the same distances.
fn split_with_radii(
    ids: &[ObjectId],
    p1: &[f64],
    p2: &[f64],
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> (Vec<ObjectId>, Vec<ObjectId>, f64, f64) {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    let (mut r1, mut r2) = (0.0f64, 0.0f64);
    for &o in ids {
        let x = ds.coords(o);
        let d1 = counters.measure(metric, x, p1);
        let d2 = counters.measure(metric, x, p2);
        if counters.le(d1, d2) {
            left.push(o);
            r1 = counters.max(r1, d1);
        } else {
            right.push(o);
            r2 = counters.max(r2, d2);
        }
    }
    (left, right, r1, r2)
}

/// `{o : d(o,p1) <= d(o,p2)}` and the rest. Each object costs two distance
/// evaluations and one comparison.
pub fn gh_split(
    ids: &[ObjectId],
    p1: &[f64],
    p2: &[f64],
    ds: &Dataset,
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> (Vec<ObjectId>, Vec<ObjectId>) {
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for &o in ids {
        let x = ds.coords(o);
        let d1 = counters.measure(metric, x, p1);
        let d2 = counters.measure(metric, x, p2);
        if counters.le(d1, d2) {
            left.push(o);
        } else {
            right.push(o);
        }
    }
    (left, right)
}

/// Bucket capacity for a tree over `n` objects: `⌈√n⌉`, at least 1.
pub fn bucket_capacity(n: usize) -> usize {
    let mut c = (n as f64).sqrt().ceil() as usize;
    // Guard against rounding in the square root.
    while c > 1 && (c - 1) * (c - 1) >= n {
        c -= 1;
    }
    while c * c < n {
        c += 1;
    }
    c.max(1)
}

/// Lower bounds for the left and right child of an internal node, given the
/// query's distances `d1`, `d2` to its pivots.
///
/// Every object `o` on the left satisfies `d(o,p1) <= d(o,p2)`, so by the
/// triangle inequality `d(q,o) >= (d(q,p1) - d(q,p2)) / 2`; symmetrically on
/// the right.
pub fn child_bounds(pruning: Pruning, d1: f64, d2: f64, r1: f64, r2: f64) -> (f64, f64) {
    match pruning {
        Pruning::Off => (0.0, 0.0),
        Pruning::CoveringRadius => ((d1 - r1).max(0.0), (d2 - r2).max(0.0)),
        Pruning::CoveringAndHyperplane => (
            (d1 - r1).max((d1 - d2) / 2.0).max(0.0),
            (d2 - r2).max((d2 - d1) / 2.0).max(0.0),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    bound: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then(self.node.cmp(&other.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl GhTree {
    pub fn build(
        id: usize,
        group: &IndexGroup,
        ds: &Dataset,
        metric: &dyn DistanceFn,
        counters: &mut CostCounters,
    ) -> Result<Self> {
        if group.members.is_empty() {
            return Err(Error::Empty("index group"));
        }
        let size = group.members.len();
        let mut tree = GhTree {
            id,
            kind: group.kind,
            nodes: Vec::new(),
            size,
            c_max: bucket_capacity(size),
            center: group.center.clone(),
            radius: group.radius,
            neighbors: Vec::new(),
        };
        let mut ids = group.members.clone();
        ids.sort_unstable();
        tree.grow(ids, ds, metric, counters);
        Ok(tree)
    }

    fn grow(
        &mut self,
        ids: Vec<ObjectId>,
        ds: &Dataset,
        metric: &dyn DistanceFn,
        counters: &mut CostCounters,
    ) -> usize {
        let slot = self.nodes.len();
        if ids.len() <= self.c_max {
            self.nodes.push(Node::Leaf {
                bucket: ids,
                oversized: false,
            });
            return slot;
        }
        let Ok((a, b)) = select_pivots(&ids, ds, metric, counters) else {
            self.nodes.push(Node::Leaf {
                bucket: ids,
                oversized: true,
            });
            return slot;
        };
        let (p1, p2) = (ds.coords(a).to_vec(), ds.coords(b).to_vec());
        let (left_ids, right_ids, r1, r2) = split_with_radii(&ids, &p1, &p2, ds, metric, counters);
        if left_ids.is_empty() || right_ids.is_empty() {
            self.nodes.push(Node::Leaf {
                bucket: ids,
                oversized: true,
            });
            return slot;
        }
        drop(ids);
        // Reserve the slot, then fill in children.
        self.nodes.push(Node::Leaf {
            bucket: Vec::new(),
            oversized: false,
        });
        let left = self.grow(left_ids, ds, metric, counters);
        let right = self.grow(right_ids, ds, metric, counters);
        self.nodes[slot] = Node::Internal {
            p1,
            p2,
            r1,
            r2,
            left,
            right,
        };
        slot
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn c_max(&self) -> usize {
        self.c_max
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    /// All object ids stored in the tree, in leaf order.
    pub fn object_ids(&self) -> Vec<ObjectId> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { bucket, .. } => Some(bucket.iter().copied()),
                _ => None,
            })
            .flatten()
            .collect()
    }

    /// Greedy descent towards the nearer pivot; at the leaf, the k-th
    /// smallest distance to the bucket (the largest if it holds fewer).
    pub fn estimate_query_radius(
        &self,
        ds: &Dataset,
        q: &[f64],
        k: usize,
        metric: &dyn DistanceFn,
        counters: &mut CostCounters,
    ) -> Result<RadiusEstimate> {
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Internal {
                    p1, p2, left, right, ..
                } => {
                    let d1 = counters.measure(metric, q, p1);
                    let d2 = counters.measure(metric, q, p2);
                    at = if counters.le(d1, d2) { *left } else { *right };
                }
                Node::Leaf { bucket, .. } => {
                    let mut ds_: Vec<f64> = bucket
                        .iter()
                        .map(|&o| counters.measure(metric, q, ds.coords(o)))
                        .collect();
                    ds_.sort_by(f64::total_cmp);
                    let idx = k.min(ds_.len()).saturating_sub(1);
                    return Ok(RadiusEstimate {
                        radius: ds_.get(idx).copied().unwrap_or(f64::INFINITY),
                        bucket_len: bucket.len(),
                    });
                }
            }
        }
    }

    /// Exact k nearest neighbours among the tree's objects, sorted by
    /// `(distance, id)`.
    ///
    /// `r_init` must not be smaller than the true k-th distance; pass
    /// `f64::INFINITY` when no bound is known.
    #[allow(clippy::too_many_arguments)]
    pub fn knn_search(
        &self,
        ds: &Dataset,
        q: &[f64],
        k: usize,
        metric: &dyn DistanceFn,
        counters: &mut CostCounters,
        r_init: f64,
        pruning: Pruning,
    ) -> Result<Vec<Hit>> {
        if k == 0 {
            return Err(Error::param("k", "must be at least 1"));
        }
        let mut best: BinaryHeap<Hit> = BinaryHeap::with_capacity(k + 1);
        let mut frontier = BinaryHeap::new();
        frontier.push(Reverse(Frontier { bound: 0.0, node: 0 }));
        let radius = |best: &BinaryHeap<Hit>| match best.peek() {
            Some(top) if best.len() == k => top.distance.min(r_init),
            _ => r_init,
        };

        while let Some(Reverse(Frontier { bound, node })) = frontier.pop() {
            if pruning != Pruning::Off && counters.gt(bound, radius(&best)) {
                break;
            }
            match &self.nodes[node] {
                Node::Internal {
                    p1,
                    p2,
                    r1,
                    r2,
                    left,
                    right,
                } => {
                    let d1 = counters.measure(metric, q, p1);
                    let d2 = counters.measure(metric, q, p2);
                    let (b1, b2) = child_bounds(pruning, d1, d2, *r1, *r2);
                    for (b, child) in [(b1, *left), (b2, *right)] {
                        if pruning == Pruning::Off || counters.le(b, radius(&best)) {
                            frontier.push(Reverse(Frontier { bound: b, node: child }));
                        }
                    }
                }
                Node::Leaf { bucket, .. } => {
                    for &o in bucket {
                        let hit = Hit {
                            id: o,
                            distance: counters.measure(metric, q, ds.coords(o)),
                        };
                        if best.len() < k {
                            if counters.le(hit.distance, r_init) {
                                best.push(hit);
                            }
                        } else {
                            counters.comparison_count += 1;
                            if hit < *best.peek().expect("heap is full") {
                                best.pop();
                                best.push(hit);
                            }
                        }
                    }
                }
            }
        }
        Ok(best.into_sorted_vec())
    }

    pub fn stats(&self) -> TreeStats {
        let mut stats = TreeStats {
            tree_id: self.id,
            kind: self.kind,
            objects: self.size,
            c_max: self.c_max,
            height: 0,
            internal_nodes: 0,
            leaves: 0,
            oversized_leaves: 0,
            bucket_histogram: BTreeMap::new(),
            nodes_per_level: Vec::new(),
        };
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, depth)) = stack.pop() {
            if stats.nodes_per_level.len() <= depth {
                stats.nodes_per_level.resize(depth + 1, 0);
            }
            stats.nodes_per_level[depth] += 1;
            stats.height = stats.height.max(depth);
            match &self.nodes[at] {
                Node::Internal { left, right, .. } => {
                    stats.internal_nodes += 1;
                    stack.push((*right, depth + 1));
                    stack.push((*left, depth + 1));
                }
                Node::Leaf { bucket, oversized } => {
                    stats.leaves += 1;
                    stats.oversized_leaves += usize::from(*oversized);
                    *stats.bucket_histogram.entry(bucket.len()).or_insert(0) += 1;
                }
            }
        }
        stats
    }

    /// Full structural check, independent of cost accounting.
    pub fn audit(&self, ds: &Dataset, metric: &dyn DistanceFn) -> TreeAudit {
        let mut audit = TreeAudit::default();
        self.audit_node(0, ds, metric, &mut audit);
        audit.objects = self.object_ids().len();
        audit
    }

    fn audit_node(&self, at: usize, ds: &Dataset, metric: &dyn DistanceFn, audit: &mut TreeAudit) -> Vec<ObjectId> {
        match &self.nodes[at] {
            Node::Leaf { bucket, oversized } => {
                if bucket.len() > self.c_max && !oversized {
                    audit.bucket_overflows += 1;
                }
                bucket.clone()
            }
            Node::Internal {
                p1,
                p2,
                r1,
                r2,
                left,
                right,
            } => {
                if metric.eval(p1, p2) <= 0.0 {
                    audit.coincident_pivots += 1;
                }
                let l = self.audit_node(*left, ds, metric, audit);
                let r = self.audit_node(*right, ds, metric, audit);
                for (ids, p, radius) in [(&l, p1, r1), (&r, p2, r2)] {
                    for &o in ids {
                        if metric.eval(p, ds.coords(o)) > radius + 1e-9 {
                            audit.radius_violations += 1;
                        }
                    }
                }
                for &o in &l {
                    if metric.eval(ds.coords(o), p1) > metric.eval(ds.coords(o), p2) {
                        audit.misrouted += 1;
                    }
                }
                for &o in &r {
                    if metric.eval(ds.coords(o), p1) <= metric.eval(ds.coords(o), p2) {
                        audit.misrouted += 1;
                    }
                }
                let mut all = l;
                all.extend(r);
                all
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub tree_id: usize,
    pub kind: IndexKind,
    pub objects: usize,
    pub c_max: usize,
    /// Edges on the longest root-to-leaf path; a lone leaf has height 0.
    pub height: usize,
    pub internal_nodes: usize,
    pub leaves: usize,
    pub oversized_leaves: usize,
    /// Bucket size → number of leaves of that size.
    pub bucket_histogram: BTreeMap<usize, usize>,
    pub nodes_per_level: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TreeAudit {
    pub objects: usize,
    pub bucket_overflows: usize,
    pub radius_violations: usize,
    pub coincident_pivots: usize,
    pub misrouted: usize,
}

impl TreeAudit {
    pub fn is_clean(&self) -> bool {
        self.bucket_overflows == 0 && self.radius_violations == 0 && self.coincident_pivots == 0 && self.misrouted == 0
    }
}
