use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Matrix;
use crate::error::{Error, Result};

pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `k x dim`
    pub centroids: Matrix,
    pub iterations: usize,
    /// Within-cluster sum of squares after each assignment step.
    pub sse_history: Vec<f64>,
}

impl KMeansResult {
    pub fn sse(&self) -> f64 {
        self.sse_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid, lower index on ties.
fn nearest(point: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let dist = sq_dist(point, centroid);
        if dist < best.1 {
            best = (c, dist);
        }
    }
    best
}

fn plus_plus_seeds(points: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = points.rows();
    let mut centroids = Matrix::zeros(k, points.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut min_dist: Vec<f64> = points
        .iter_rows()
        .map(|p| sq_dist(p, points.row(first)))
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&min_dist) {
            Ok(dist) => dist.sample(rng),
            // every point already coincides with a chosen centroid
            Err(_) => rng.random_range(0..n),
        };
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, p) in points.iter_rows().enumerate() {
            min_dist[i] = min_dist[i].min(sq_dist(p, points.row(pick)));
        }
    }
    centroids
}

/// Lloyd's k-means with k-means++ seeding from a ChaCha8 stream seeded by
/// `seed`.
///
/// Labels are nearest-centroid indices (Euclidean, lowest index on ties).
/// Iteration stops when assignments no longer change or after
/// [`KMEANS_MAX_ITER`] rounds. A cluster left empty by an assignment step is
/// re-seeded at the point farthest from its current centroid.
pub fn kmeans(points: &Matrix, k: usize, seed: u64) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || n < k {
        return Err(Error::Config(format!(
            "k-means needs 1 <= k <= N, got k={k}, N={n}"
        )));
    }
    if points.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Value(
            "k-means input contains non-finite values".into(),
        ));
    }
    let dim = points.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = plus_plus_seeds(points, k, &mut rng);
    let mut labels = vec![usize::MAX; n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;

    loop {
        iterations += 1;
        let mut changed = false;
        let mut dists = vec![0.0; n];
        for (i, p) in points.iter_rows().enumerate() {
            let (c, dist) = nearest(p, &centroids);
            dists[i] = dist;
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }

        let mut counts = vec![0usize; k];
        for &c in &labels {
            counts[c] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..n)
                .filter(|&i| counts[labels[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            // nothing to gain when every point already sits on its centroid
            let Some(far) = far.filter(|&i| dists[i] > 0.0) else {
                continue;
            };
            counts[labels[far]] -= 1;
            labels[far] = c;
            counts[c] = 1;
            dists[far] = 0.0;
            centroids.row_mut(c).copy_from_slice(points.row(far));
            changed = true;
        }
        sse_history.push(dists.iter().sum());

        if !changed || iterations >= KMEANS_MAX_ITER {
            break;
        }

        let mut sums = Matrix::zeros(k, dim);
        for (i, p) in points.iter_rows().enumerate() {
            for (s, x) in sums.row_mut(labels[i]).iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in (0..k).filter(|&c| counts[c] > 0) {
            let inv = 1.0 / counts[c] as f64;
            for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s * inv;
            }
        }
    }

    Ok(KMeansResult {
        labels,
        centroids,
        iterations,
        sse_history,
    })
}
