//! Cluster relabeling: k-means over the label embeddings, then every sample
//! is mapped to the centroid nearest its mean positive-label embedding.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::glove::EmbeddingMatrix;
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            clusters: 10,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clusters == 0 {
            return Err(Error::config("kmeans.clusters", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("kmeans.max_iter", "must be positive"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::config("kmeans.tol", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub centroids: Array2<f64>,
}

impl ClusterModel {
    pub fn num_clusters(&self) -> usize {
        self.centroids.nrows()
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, point: ArrayView1<f64>) -> usize {
        nearest(self.centroids.view(), point).0
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: ArrayView2<f64>, p: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

/// Within-cluster sum of squared distances.
pub fn kmeans_objective(
    points: ArrayView2<f64>,
    centroids: ArrayView2<f64>,
    assignments: &[usize],
) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(assignments)
        .map(|(p, &a)| sq_dist(p, centroids.row(a)))
        .sum()
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub assignments: Vec<usize>,
    /// Objective after the initial assignment and after every subsequent
    /// half-step (centroid update, reassignment).
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("nonempty trace")
    }
}

fn kmeans_pp_init(points: ArrayView2<f64>, n: usize, rng: &mut crate::seed::Rng) -> Array2<f64> {
    let m = points.nrows();
    let mut chosen = vec![rng.random_range(0..m)];
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p, points.row(chosen[0])))
        .collect();
    while chosen.len() < n {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                if target < w {
                    pick = Some(i);
                    break;
                }
                target -= w;
            }
            // Rounding can run off the end; fall back to the last positive weight.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("total > 0"))
        } else {
            // All remaining points coincide with a centroid.
            (0..m).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, points.row(next)));
        }
    }
    let mut c = Array2::zeros((n, points.ncols()));
    for (k, &i) in chosen.iter().enumerate() {
        c.row_mut(k).assign(&points.row(i));
    }
    c
}

/// Seeded k-means++ followed by Lloyd iterations until the assignment is a
/// fixpoint, the largest centroid shift drops below `tol`, or `max_iter`.
/// A cluster that empties is repaired by moving into it the point farthest
/// from its own centroid.
pub fn kmeans(points: ArrayView2<f64>, cfg: &KMeansConfig, seed: u64) -> Result<KMeansFit> {
    cfg.validate()?;
    let (m, dim) = points.dim();
    let n = cfg.clusters;
    if m < n {
        return Err(Error::InvalidInput(format!(
            "k-means needs at least as many points ({m}) as clusters ({n})"
        )));
    }
    let mut rng = rng_from(seed);
    let mut centroids = kmeans_pp_init(points, n, &mut rng);
    let assign_all = |c: &Array2<f64>| -> Vec<usize> {
        points.rows().into_iter().map(|p| nearest(c.view(), p).0).collect()
    };
    let mut assignments = assign_all(&centroids);
    let mut trace = vec![kmeans_objective(points, centroids.view(), &assignments)];
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let mut sums = Array2::<f64>::zeros((n, dim));
        let mut counts = vec![0usize; n];
        for (p, &a) in points.rows().into_iter().zip(&assignments) {
            sums.row_mut(a).scaled_add(1.0, &p);
            counts[a] += 1;
        }
        let mut updated = centroids.clone();
        for k in 0..n {
            if counts[k] > 0 {
                let mean = &sums.row(k) / counts[k] as f64;
                updated.row_mut(k).assign(&mean);
            }
        }
        for k in 0..n {
            if counts[k] > 0 {
                continue;
            }
            let far = (0..m)
                .filter(|&i| counts[assignments[i]] > 1)
                .max_by(|&i, &j| {
                    let di = sq_dist(points.row(i), updated.row(assignments[i]));
                    let dj = sq_dist(points.row(j), updated.row(assignments[j]));
                    // Prefer the lower index among equally distant points.
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("m >= n guarantees a donor cluster");
            counts[assignments[far]] -= 1;
            assignments[far] = k;
            counts[k] = 1;
            updated.row_mut(k).assign(&points.row(far));
        }
        trace.push(kmeans_objective(points, updated.view(), &assignments));

        let shift = centroids
            .rows()
            .into_iter()
            .zip(updated.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        let reassigned = assign_all(&updated);
        let changed = reassigned != assignments;
        centroids = updated;
        assignments = reassigned;
        trace.push(kmeans_objective(points, centroids.view(), &assignments));
        if !changed || shift < cfg.tol {
            break;
        }
    }

    Ok(KMeansFit {
        model: ClusterModel { centroids },
        assignments,
        objective_trace: trace,
        iterations,
    })
}

/// Mean of the embedding rows of the active labels.
pub fn mean_embedding(z: &EmbeddingMatrix, labels: &[bool]) -> Result<Array1<f64>> {
    if labels.len() != z.num_classes() {
        return Err(Error::Dimension {
            context: "label vector length",
            expected: z.num_classes(),
            actual: labels.len(),
        });
    }
    let mut sum = Array1::<f64>::zeros(z.dim());
    let mut count = 0usize;
    for (i, _) in labels.iter().enumerate().filter(|(_, &b)| b) {
        sum += &z.matrix().row(i);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidInput("mean embedding of an empty label set".into()));
    }
    Ok(sum / count as f64)
}

/// Surrogate single labels, one per sample, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelabeledDataset {
    pub cluster_label: Vec<usize>,
}

pub fn relabel(
    dataset: &Dataset,
    z: &EmbeddingMatrix,
    model: &ClusterModel,
) -> Result<RelabeledDataset> {
    if model.centroids.ncols() != z.dim() {
        return Err(Error::Dimension {
            context: "centroid dimensionality",
            expected: z.dim(),
            actual: model.centroids.ncols(),
        });
    }
    let cluster_label = dataset
        .samples
        .iter()
        .map(|s| mean_embedding(z, &s.labels).map(|m| model.nearest(m.view())))
        .collect::<Result<Vec<_>>>()?;
    Ok(RelabeledDataset { cluster_label })
}
