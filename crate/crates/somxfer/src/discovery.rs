//! Online clustering of environment feature vectors into candidate tasks.
//!
//! Streamed stimulus signatures are grouped by nearest centroid with a
//! per-element standard-deviation band; each distinct cluster becomes a
//! candidate task whose goal predicate is membership in that band.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::similarity::WeightVector;

/// One discovered cluster: running mean, running population variance and the
/// number of absorbed members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: WeightVector,
    pub variance: Vec<f64>,
    pub count: u64,
}

impl Cluster {
    fn seed(f: &WeightVector, var0: f64) -> Self {
        Cluster {
            centroid: f.clone(),
            variance: vec![var0; f.len()],
            count: 1,
        }
    }

    /// Folds one member into the running mean and variance.
    ///
    /// The variance recurrence keeps the old mean inside the square-sum term
    /// and subtracts the square of the updated mean, which reproduces the
    /// batch population variance exactly (plus the decaying var0 seed).
    pub fn update(&mut self, f: &WeightVector) {
        debug_assert_eq!(f.len(), self.centroid.len());
        let n = self.count as f64;
        let centroid = self.centroid.as_mut_slice();
        for j in 0..centroid.len() {
            let old_mean = centroid[j];
            let new_mean = (n * old_mean + f[j]) / (n + 1.0);
            self.variance[j] = (n * (self.variance[j] + old_mean * old_mean) + f[j] * f[j])
                / (n + 1.0)
                - new_mean * new_mean;
            // Rounding can leave a tiny negative residue.
            if self.variance[j] < 0.0 {
                self.variance[j] = 0.0;
            }
            centroid[j] = new_mean;
        }
        self.count += 1;
    }

    fn squared_distance(&self, f: &WeightVector) -> f64 {
        self.centroid
            .iter()
            .zip(f.iter())
            .map(|(c, v)| (c - v) * (c - v))
            .sum()
    }

    fn accepts(&self, f: &WeightVector, k_std: f64) -> bool {
        self.centroid
            .iter()
            .zip(self.variance.iter())
            .zip(f.iter())
            .all(|((c, var), v)| (v - c).abs() <= k_std * var.sqrt())
    }
}

/// Streaming cluster model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    clusters: Vec<Cluster>,
    k_std: f64,
    var0: f64,
}

impl ClusterModel {
    pub fn new(k_std: f64, var0: f64) -> Result<Self> {
        if !(k_std > 0.0) {
            return Err(Error::InvalidParameter("k_std must be positive".into()));
        }
        if !(var0 > 0.0) {
            return Err(Error::InvalidParameter("var0 must be positive".into()));
        }
        Ok(ClusterModel {
            clusters: Vec::new(),
            k_std,
            var0,
        })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn k_std(&self) -> f64 {
        self.k_std
    }

    /// Routes one observation: returns the cluster index and whether a new
    /// cluster was seeded.
    ///
    /// The nearest centroid by Euclidean distance is the only membership
    /// candidate; observations it rejects seed a fresh cluster.
    pub fn observe(&mut self, f: &WeightVector) -> Result<(usize, bool)> {
        if let Some(first) = self.clusters.first() {
            if first.centroid.len() != f.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.centroid.len(),
                    found: f.len(),
                });
            }
        }
        if self.clusters.is_empty() {
            self.clusters.push(Cluster::seed(f, self.var0));
            return Ok((0, true));
        }
        let mut nearest = 0;
        let mut best = f64::INFINITY;
        for (i, c) in self.clusters.iter().enumerate() {
            let d = c.squared_distance(f);
            if d < best {
                best = d;
                nearest = i;
            }
        }
        if self.clusters[nearest].accepts(f, self.k_std) {
            self.clusters[nearest].update(f);
            Ok((nearest, false))
        } else {
            self.clusters.push(Cluster::seed(f, self.var0));
            Ok((self.clusters.len() - 1, true))
        }
    }
}

/// A candidate task distilled from a cluster: reaching any state whose
/// stimulus signature falls inside the band counts as reaching the goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTask {
    pub id: String,
    pub centroid: WeightVector,
    /// Per-element half-width k_std * sqrt(var), snapshot at extraction time.
    pub band: Vec<f64>,
}

impl ClusterTask {
    pub fn matches(&self, f: &WeightVector) -> bool {
        if f.len() != self.centroid.len() {
            return false;
        }
        self.centroid
            .iter()
            .zip(self.band.iter())
            .zip(f.iter())
            .all(|((c, b), v)| (v - c).abs() <= *b)
    }

    /// Whether the all-zero signature (no stimulus in range) is a member,
    /// i.e. the cluster describes background space rather than a landmark.
    pub fn is_background(&self) -> bool {
        self.centroid
            .iter()
            .zip(self.band.iter())
            .all(|(c, b)| c.abs() <= *b)
    }
}

/// Snapshots every cluster as a candidate task.
pub fn tasks_from_clusters(model: &ClusterModel) -> Vec<ClusterTask> {
    model
        .clusters
        .iter()
        .enumerate()
        .map(|(i, c)| ClusterTask {
            id: format!("cluster-{i}"),
            centroid: c.centroid.clone(),
            band: c
                .variance
                .iter()
                .map(|v| model.k_std * v.sqrt())
                .collect(),
        })
        .collect()
}
