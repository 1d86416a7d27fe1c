//! Cluster-quality measures: Dunn index, a k-means baseline and purity.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Finite set of equal-dimension points.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidDataset("no points".into()));
        };
        let dim = first.len();
        if let Some(i) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::InvalidDataset(format!(
                "point {i} has dimension {}, expected {dim}",
                points[i].len()
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("non-finite coordinate".into()));
        }
        Ok(Dataset { points })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// Assignment of points to clusters `0..k`, each cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    assignment: Vec<usize>,
    k: usize,
}

impl Clustering {
    pub fn new(assignment: Vec<usize>, k: usize) -> Result<Self> {
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            if c >= k {
                return Err(Error::InvalidClustering(format!("cluster id {c} >= k = {k}")));
            }
            sizes[c] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::InvalidClustering(format!("cluster {empty} is empty")));
        }
        Ok(Clustering { assignment, k })
    }

    /// Builds a clustering from arbitrary labels, numbering clusters in
    /// label order.
    pub fn from_labels<L: Ord>(labels: &[L]) -> Self {
        let ids: BTreeMap<&L, usize> = labels
            .iter()
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        Clustering {
            assignment: labels.iter().map(|l| ids[l]).collect(),
            k: ids.len(),
        }
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

/// Minimum single-linkage distance between clusters over the largest
/// cluster diameter. Larger is better.
pub fn dunn_index(data: &Dataset, clustering: &Clustering, metric: Metric) -> Result<f64> {
    if clustering.assignment.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            actual: clustering.assignment.len(),
        });
    }
    if clustering.k < 2 {
        return Err(Error::NeedTwoClusters(clustering.k));
    }
    let points = data.points();
    let labels = &clustering.assignment;
    let mut max_diam = 0.0f64;
    let mut min_sep = f64::INFINITY;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let d = metric.distance(&points[i], &points[j]);
            if labels[i] == labels[j] {
                max_diam = max_diam.max(d);
            } else {
                min_sep = min_sep.min(d);
            }
        }
    }
    if max_diam == 0.0 {
        return Err(Error::DegenerateDiameter);
    }
    Ok(min_sep / max_diam)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub clustering: Clustering,
    pub centroids: Vec<Vec<f64>>,
    /// Sum of squared distances to assigned centroids at convergence.
    pub objective: f64,
    /// Objective after every update step.
    pub history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn seed_centroids(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn objective(points: &[Vec<f64>], assignment: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

fn recompute_centroids(points: &[Vec<f64>], assignment: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assignment.iter()) {
        counts[c] += 1;
        for (s, v) in sums[c].iter_mut().zip(p) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }
    }
    // Re-seed empty clusters with the point farthest from its centroid.
    while let Some(empty) = counts.iter().position(|&n| n == 0) {
        let far = (0..points.len())
            .filter(|&i| counts[assignment[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(&points[a], &centroids[assignment[a]])
                    .total_cmp(&sq_dist(&points[b], &centroids[assignment[b]]))
                    .then(b.cmp(&a))
            })
            .expect("k <= n leaves a cluster with more than one point");
        let donor = assignment[far];
        counts[donor] -= 1;
        counts[empty] = 1;
        assignment[far] = empty;
        centroids[empty] = points[far].clone();
        let members: Vec<&Vec<f64>> = points
            .iter()
            .zip(assignment.iter())
            .filter(|(_, &c)| c == donor)
            .map(|(p, _)| p)
            .collect();
        centroids[donor] = (0..dim)
            .map(|d| members.iter().map(|p| p[d]).sum::<f64>() / members.len() as f64)
            .collect();
    }
}

/// Independent k-means++ starts per call; the lowest objective wins.
pub const KMEANS_RESTARTS: usize = 10;

/// Assignment, centroids and objective history of one Lloyd run.
type LloydRun = (Vec<usize>, Vec<Vec<f64>>, Vec<f64>);

fn lloyd(points: &[Vec<f64>], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> LloydRun {
    let mut centroids = seed_centroids(points, k, rng);
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
    let mut history = Vec::new();
    for iter in 0..max_iters.max(1) {
        if iter > 0 {
            let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids).0).collect();
            if next == assignment {
                break;
            }
            assignment = next;
        }
        recompute_centroids(points, &mut assignment, &mut centroids);
        history.push(objective(points, &assignment, &centroids));
    }
    (assignment, centroids, history)
}

/// Lloyd's algorithm from k-means++ seeding, best of [`KMEANS_RESTARTS`]
/// starts. Bit-reproducible for a seed.
pub fn kmeans(data: &Dataset, k: usize, seed: u64, max_iters: usize) -> Result<KMeans> {
    kmeans_restarts(data, k, seed, max_iters, KMEANS_RESTARTS)
}

/// As [`kmeans`] with an explicit number of starts. `history` and
/// `iterations` describe the winning start.
pub fn kmeans_restarts(data: &Dataset, k: usize, seed: u64, max_iters: usize, restarts: usize) -> Result<KMeans> {
    let points = data.points();
    if k == 0 || k > points.len() {
        return Err(Error::BadK { k, n: points.len() });
    }
    if restarts == 0 {
        return Err(Error::InvalidConfig("kmeans needs at least one start".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<LloydRun> = None;
    for _ in 0..restarts {
        let run = lloyd(points, k, max_iters, &mut rng);
        let better = match &best {
            None => true,
            Some((_, _, h)) => run.2.last() < h.last(),
        };
        if better {
            best = Some(run);
        }
    }
    let (assignment, centroids, history) = best.expect("at least one start");
    Ok(KMeans {
        clustering: Clustering::new(assignment, k)?,
        centroids,
        objective: *history.last().expect("at least one iteration runs"),
        iterations: history.len(),
        history,
    })
}

/// Fraction of points whose cluster's majority label matches their own.
pub fn purity<L: Ord>(clustering: &Clustering, labels: &[L]) -> Result<f64> {
    let n = clustering.assignment.len();
    if labels.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if n == 0 {
        return Ok(1.0);
    }
    let mut counts: Vec<BTreeMap<&L, usize>> = vec![BTreeMap::new(); clustering.k];
    for (&c, l) in clustering.assignment.iter().zip(labels) {
        *counts[c].entry(l).or_default() += 1;
    }
    let majority: usize = counts.iter().map(|m| m.values().copied().max().unwrap_or(0)).sum();
    Ok(majority as f64 / n as f64)
}

/// Linear-interpolation quantile of unsorted values, `q` in [0, 1].
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn dunn_index_examples() {
        let data = line(&[0.0, 1.0, 10.0, 11.0]);
        let c = Clustering::new(vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(dunn_index(&data, &c, Metric::Euclidean).unwrap(), 9.0);
        let scaled = line(&[0.0, 10.0, 100.0, 110.0]);
        assert_eq!(dunn_index(&scaled, &c, Metric::Euclidean).unwrap(), 9.0);
        let singletons = line(&[0.0, 5.0]);
        let c2 = Clustering::new(vec![0, 1], 2).unwrap();
        assert!(matches!(
            dunn_index(&singletons, &c2, Metric::Euclidean),
            Err(Error::DegenerateDiameter)
        ));
        let one = Clustering::new(vec![0, 0, 0, 0], 1).unwrap();
        assert!(matches!(
            dunn_index(&data, &one, Metric::Euclidean),
            Err(Error::NeedTwoClusters(1))
        ));
    }

    #[test]
    fn manhattan_metric() {
        let data = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0], vec![6.0, 5.0]]).unwrap();
        let c = Clustering::new(vec![0, 0, 1, 1], 2).unwrap();
        // closest cross pair (1,1)-(5,5) = 8, widest cluster diameter = 2
        assert_eq!(dunn_index(&data, &c, Metric::Manhattan).unwrap(), 4.0);
    }

    #[test]
    fn kmeans_examples() {
        let r = kmeans(&line(&[0.0, 10.0]), 2, 1, 100).unwrap();
        assert_eq!(r.objective, 0.0);

        let r = kmeans(&line(&[0.0, 2.0]), 1, 1, 100).unwrap();
        assert_eq!(r.centroids, vec![vec![1.0]]);
        assert_eq!(r.objective, 2.0);

        let r = kmeans(&line(&[0.0, 1.0, 9.0, 10.0]), 2, 3, 100).unwrap();
        assert_eq!(r.objective, 1.0);
        let a = r.clustering.assignment();
        assert_eq!(a[0], a[1]);
        assert_eq!(a[2], a[3]);
        assert_ne!(a[0], a[2]);
    }

    #[test]
    fn kmeans_rejects_bad_k() {
        let d = line(&[1.0, 2.0]);
        assert!(matches!(kmeans(&d, 0, 0, 10), Err(Error::BadK { k: 0, n: 2 })));
        assert!(matches!(kmeans(&d, 3, 0, 10), Err(Error::BadK { k: 3, n: 2 })));
        assert!(kmeans_restarts(&d, 1, 0, 10, 0).is_err());
    }

    #[test]
    fn kmeans_with_duplicate_points_keeps_every_cluster_populated() {
        let d = line(&[1.0, 1.0, 1.0, 1.0, 2.0]);
        let r = kmeans(&d, 3, 9, 50).unwrap();
        assert!(r.clustering.sizes().iter().all(|&s| s > 0));
    }

    #[test]
    fn purity_examples() {
        let c = Clustering::new(vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(purity(&c, &["a", "a", "b", "b"]).unwrap(), 1.0);
        assert_eq!(purity(&c, &["a", "b", "b", "b"]).unwrap(), 0.75);
        let one = Clustering::new(vec![0, 0, 0, 0], 1).unwrap();
        assert_eq!(purity(&one, &["a", "a", "b", "b"]).unwrap(), 0.5);
        assert!(matches!(purity(&c, &["a"]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn clustering_validation() {
        assert!(Clustering::new(vec![0, 2], 2).is_err());
        assert!(Clustering::new(vec![0, 0], 2).is_err());
        let c = Clustering::from_labels(&["z", "a", "z"]);
        assert_eq!(c.assignment(), &[1, 0, 1]);
        assert_eq!(c.k(), 2);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![]).is_err());
        assert!(Dataset::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn quantile_interpolates_linearly() {
        let errors: Vec<f64> = (1..=10).map(f64::from).collect();
        assert!((quantile(&errors, 0.9).unwrap() - 9.1).abs() < 1e-12);
        assert_eq!(quantile(&[3.0], 0.3), Some(3.0));
        assert_eq!(quantile(&[], 0.5), None);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::collection::vec;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn kmeans_objective_never_increases(
            pts in vec(vec(-10.0f64..10.0, 2), 3..40),
            k in 1usize..4,
            seed in any::<u64>(),
        ) {
            let data = Dataset::new(pts).unwrap();
            let k = k.min(data.len());
            let r = kmeans(&data, k, seed, 100).unwrap();
            for w in r.history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
            let again = kmeans(&data, k, seed, 100).unwrap();
            prop_assert_eq!(&r, &again);
            // The first start is shared, so more starts can only help.
            let single = kmeans_restarts(&data, k, seed, 100, 1).unwrap();
            prop_assert!(r.objective <= single.objective);
        }

        #[test]
        fn dunn_index_is_translation_and_permutation_invariant(
            pts in vec(vec(-5.0f64..5.0, 3), 4..30),
            shift in -100.0f64..100.0,
        ) {
            let n = pts.len();
            let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
            let c = Clustering::new(labels.clone(), 2).unwrap();
            let base = dunn_index(&Dataset::new(pts.clone()).unwrap(), &c, Metric::Euclidean).unwrap();

            let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|v| v + shift).collect()).collect();
            let shifted = dunn_index(&Dataset::new(moved).unwrap(), &c, Metric::Euclidean).unwrap();
            prop_assert!((base - shifted).abs() <= 1e-9 * base.max(1.0));

            let rev_pts: Vec<Vec<f64>> = pts.iter().rev().cloned().collect();
            let rev_labels: Vec<usize> = labels.iter().rev().copied().collect();
            let rev = dunn_index(
                &Dataset::new(rev_pts).unwrap(),
                &Clustering::new(rev_labels, 2).unwrap(),
                Metric::Euclidean,
            ).unwrap();
            prop_assert_eq!(base, rev);
        }
    }
}
