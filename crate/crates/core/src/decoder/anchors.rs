use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::trajectory::{AnchorSet, Trajectory};
use crate::error::{dim_err, LadyError, Result};

/// Iteration cap of the Lloyd loop.
pub const MAX_KMEANS_ITERS: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// k-means over flattened waypoint vectors, k-means++ seeding, at most
/// [`MAX_KMEANS_ITERS`] Lloyd iterations.
pub fn cluster_anchors(dataset: &[Trajectory], k: usize, seed: u64) -> Result<AnchorSet> {
    if k == 0 {
        return Err(LadyError::Config("k must be at least 1".into()));
    }
    if dataset.len() < k {
        return Err(LadyError::InsufficientData(format!("{} trajectories for {k} clusters", dataset.len())));
    }
    let (n, dt) = (dataset[0].len(), dataset[0].dt);
    if dataset.iter().any(|t| t.len() != n || t.dt != dt) {
        return Err(dim_err("trajectories differ in horizon or dt"));
    }
    let points: Vec<Vec<f64>> = dataset.iter().map(Trajectory::flatten).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(LadyError::InsufficientData(format!("fewer than {k} distinct trajectories")));
        }
        let mut target = rng.random_range(0.0..total);
        let mut pick = d2.iter().rposition(|&v| v > 0.0).expect("positive total");
        for (i, &v) in d2.iter().enumerate() {
            if v > 0.0 && target < v {
                pick = i;
                break;
            }
            target -= v;
        }
        centroids.push(points[pick].clone());
        for (dist, p) in d2.iter_mut().zip(&points) {
            *dist = dist.min(sq_dist(p, &points[pick]));
        }
    }

    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..MAX_KMEANS_ITERS {
        let mut sums = vec![vec![0.0; points[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for (c, (sum, &count)) in centroids.iter_mut().zip(sums.iter().zip(&counts)) {
            if count > 0 {
                *c = sum.iter().map(|s| s / count as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let anchors = centroids.iter().map(|c| Trajectory::from_flat(dt, c)).collect::<Result<_>>()?;
    AnchorSet::new(anchors)
}
