//! Seeded Gaussian blob fixtures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub clusters: usize,
    pub points: usize,
    pub dimension: usize,
    /// Distance between consecutive cluster centers along the first axis.
    pub separation: f64,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        Self {
            clusters: 3,
            points: 10_000,
            dimension: 5,
            separation: 50.0,
            sigma: 1.0,
            seed: 0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 || self.dimension == 0 {
            return Err(Error::param("clusters", "clusters and dimension must be positive"));
        }
        if self.points < self.clusters {
            return Err(Error::param("points", "need at least one point per cluster"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", "must be positive and finite"));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::param("separation", "must be non-negative and finite"));
        }
        Ok(())
    }

    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.clusters)
            .map(|c| {
                let mut x = vec![0.0; self.dimension];
                x[0] = c as f64 * self.separation;
                x
            })
            .collect()
    }

    /// Points with their source cluster; clusters are filled round-robin.
    pub fn generate(&self) -> Result<(Dataset, Vec<usize>)> {
        self.validate()?;
        let (rows, labels) = self.sample(self.points, self.seed);
        Ok((Dataset::with_dimension(self.dimension, rows)?, labels))
    }

    /// Fresh draws from the same clusters, for use as queries.
    pub fn queries(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        // Keep query streams apart from the data stream for equal seeds.
        Ok(self.sample(n, seed ^ 0x9e37_79b9_7f4a_7c15).0)
    }

    fn sample(&self, n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.sigma).expect("validated sigma");
        let centers = self.centers();
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let c = i % self.clusters;
            rows.push(centers[c].iter().map(|&m| m + noise.sample(&mut rng)).collect());
            labels.push(c);
        }
        (rows, labels)
    }
}

/// Uniform points in the unit cube.
pub fn uniform(n: usize, dimension: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|_| (0..dimension).map(|_| rng.random::<f64>()).collect())
        .collect();
    Dataset::with_dimension(dimension, rows)
}
