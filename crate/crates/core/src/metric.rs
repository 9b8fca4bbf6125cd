//! Objects, datasets, distance functions and cost accounting.
//!
//! Every distance evaluation made by the index goes through
//! [`CostCounters::measure`], so the counters double as the cost model used
//! in reports: one tick per distance call, one tick per order predicate
//! between two distance-valued quantities.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Object identifier. Ids are dense and follow ingestion order.
pub type ObjectId = usize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataObject {
    pub id: ObjectId,
    pub coords: Vec<f64>,
}

/// An immutable collection of fixed-dimension vectors. The id of every
/// object equals its position in [`Dataset::objects`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dimension: usize,
    objects: Vec<DataObject>,
}

impl Dataset {
    /// Builds a dataset from raw rows, assigning ids in row order.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dimension = rows.first().map(Vec::len).ok_or(Error::Empty("dataset"))?;
        Self::with_dimension(dimension, rows)
    }

    pub fn with_dimension(dimension: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::param("dimension", "must be at least 1"));
        }
        let mut objects = Vec::with_capacity(rows.len());
        for (id, coords) in rows.into_iter().enumerate() {
            if coords.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: coords.len(),
                });
            }
            objects.push(DataObject { id, coords });
        }
        Ok(Self { dimension, objects })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn objects(&self) -> &[DataObject] {
        &self.objects
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        0..self.objects.len()
    }

    /// Coordinates of object `id`. Panics on an unknown id.
    #[inline]
    pub fn coords(&self, id: ObjectId) -> &[f64] {
        &self.objects[id].coords
    }

    pub fn get(&self, id: ObjectId) -> Option<&DataObject> {
        self.objects.get(id)
    }

    pub fn check_dimension(&self, coords: &[f64]) -> Result<()> {
        if coords.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: coords.len(),
            });
        }
        Ok(())
    }

    /// Mean of the listed members.
    pub fn centroid_of(&self, ids: &[ObjectId]) -> Result<Vec<f64>> {
        centroid(ids.iter().map(|&id| self.coords(id)))
    }
}

/// A distance function over real vectors. Implementations must be metrics:
/// non-negative, symmetric, zero exactly on identical inputs, and
/// satisfying the triangle inequality.
///
/// `eval` does no bookkeeping; callers go through [`CostCounters::measure`].
pub trait DistanceFn: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, a: &[f64], b: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
    Chebyshev,
}

impl DistanceFn for Metric {
    fn name(&self) -> &str {
        match self {
            Metric::Euclidean => "euclidean",
            Metric::Manhattan => "manhattan",
            Metric::Chebyshev => "chebyshev",
        }
    }

    #[inline]
    fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| x - y);
        match self {
            Metric::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Metric::Manhattan => diffs.map(f64::abs).sum(),
            Metric::Chebyshev => diffs.map(f64::abs).fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "manhattan" | "l1" => Ok(Metric::Manhattan),
            "chebyshev" | "linf" => Ok(Metric::Chebyshev),
            other => Err(Error::UnknownMetric(other.to_string())),
        }
    }
}

/// Cost of an operation: distance evaluations and comparisons between
/// distance-valued quantities.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CostCounters {
    pub distance_count: u64,
    pub comparison_count: u64,
}

impl CostCounters {
    pub fn new() -> Self {
        Self::default()
    }

    /// Evaluates `metric` and records one distance computation.
    #[inline]
    pub fn measure(&mut self, metric: &dyn DistanceFn, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        self.distance_count += 1;
        metric.eval(a, b)
    }

    /// `a < b`, counted.
    #[inline]
    pub fn lt(&mut self, a: f64, b: f64) -> bool {
        self.comparison_count += 1;
        a < b
    }

    /// `a <= b`, counted.
    #[inline]
    pub fn le(&mut self, a: f64, b: f64) -> bool {
        self.comparison_count += 1;
        a <= b
    }

    /// `a > b`, counted.
    #[inline]
    pub fn gt(&mut self, a: f64, b: f64) -> bool {
        self.comparison_count += 1;
        a > b
    }

    /// Running maximum, counted as one comparison.
    #[inline]
    pub fn max(&mut self, acc: f64, x: f64) -> f64 {
        if self.gt(x, acc) {
            x
        } else {
            acc
        }
    }
}

impl Add for CostCounters {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            distance_count: self.distance_count + rhs.distance_count,
            comparison_count: self.comparison_count + rhs.comparison_count,
        }
    }
}

impl AddAssign for CostCounters {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sum for CostCounters {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Checked distance between two objects; records one evaluation.
pub fn distance(a: &DataObject, b: &DataObject, metric: &dyn DistanceFn, counters: &mut CostCounters) -> Result<f64> {
    if a.coords.len() != b.coords.len() {
        return Err(Error::DimensionMismatch {
            expected: a.coords.len(),
            actual: b.coords.len(),
        });
    }
    Ok(counters.measure(metric, &a.coords, &b.coords))
}

/// Component-wise arithmetic mean of a non-empty set of vectors.
pub fn centroid<'a, I>(points: I) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut iter = points.into_iter();
    let first = iter.next().ok_or(Error::Empty("centroid of no points"))?;
    let mut sum = first.to_vec();
    let mut count = 1usize;
    for p in iter {
        if p.len() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                actual: p.len(),
            });
        }
        for (s, x) in sum.iter_mut().zip(p) {
            *s += x;
        }
        count += 1;
    }
    let n = count as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

/// Largest distance from `center` to any listed member (0 for none).
pub(crate) fn covering_radius(
    ds: &Dataset,
    ids: &[ObjectId],
    center: &[f64],
    metric: &dyn DistanceFn,
    counters: &mut CostCounters,
) -> f64 {
    ids.iter().fold(0.0, |acc, &id| {
        let d = counters.measure(metric, center, ds.coords(id));
        counters.max(acc, d)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obj(id: usize, coords: &[f64]) -> DataObject {
        DataObject {
            id,
            coords: coords.to_vec(),
        }
    }

    #[test]
    fn euclidean_examples() {
        let mut c = CostCounters::new();
        let m = Metric::Euclidean;
        assert_eq!(
            distance(&obj(0, &[0., 0.]), &obj(1, &[3., 4.]), &m, &mut c).unwrap(),
            5.0
        );
        let x = obj(0, &[1.5, -2.0, 7.25]);
        assert_eq!(distance(&x, &x, &m, &mut c).unwrap(), 0.0);
        let d = distance(&obj(0, &[1., 1.]), &obj(1, &[2., 2.]), &m, &mut c).unwrap();
        assert!((d - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(c.distance_count, 3);
        assert_eq!(c.comparison_count, 0);
    }

    #[test]
    fn distance_rejects_mismatched_dimensions() {
        let mut c = CostCounters::new();
        let err = distance(&obj(0, &[0.]), &obj(1, &[0., 1.]), &Metric::Euclidean, &mut c);
        assert_eq!(err, Err(Error::DimensionMismatch { expected: 1, actual: 2 }));
        assert_eq!(c.distance_count, 0);
    }

    #[test]
    fn centroid_examples() {
        let pts: [&[f64]; 2] = [&[0., 0.], &[2., 0.]];
        assert_eq!(centroid(pts).unwrap(), vec![1.0, 0.0]);
        let single: [&[f64]; 1] = [&[1., 2., 3.]];
        assert_eq!(centroid(single).unwrap(), vec![1.0, 2.0, 3.0]);
        let rect: [&[f64]; 4] = [&[0., 0.], &[0., 2.], &[3., 0.], &[3., 2.]];
        assert_eq!(centroid(rect).unwrap(), vec![1.5, 1.0]);
        assert_eq!(centroid(std::iter::empty()), Err(Error::Empty("centroid of no points")));
    }

    #[test]
    fn dataset_assigns_dense_ids_and_validates() {
        let ds = Dataset::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(ds.dimension(), 2);
        assert_eq!(ds.objects()[1].id, 1);
        assert!(Dataset::from_rows(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Dataset::from_rows(vec![]).is_err());
        assert!(Dataset::with_dimension(0, vec![]).is_err());
    }

    #[test]
    fn metric_names_parse() {
        for m in [Metric::Euclidean, Metric::Manhattan, Metric::Chebyshev] {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("cosine".parse::<Metric>().is_err());
    }

    fn triple(dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
        let v = || proptest::collection::vec(-1e3..1e3f64, dim);
        (v(), v(), v())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn metrics_satisfy_axioms((x, y, z) in (1usize..8).prop_flat_map(triple)) {
            for m in [Metric::Euclidean, Metric::Manhattan, Metric::Chebyshev] {
                let dxy = m.eval(&x, &y);
                prop_assert!(dxy >= 0.0);
                prop_assert_eq!(dxy, m.eval(&y, &x));
                prop_assert_eq!(m.eval(&x, &x), 0.0);
                prop_assert!(m.eval(&x, &z) <= dxy + m.eval(&y, &z) + 1e-9);
            }
        }
    }
}
