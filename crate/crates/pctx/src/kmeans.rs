//! Deterministic k-means++ with Lloyd refinement, shared by the context
//! condensation and the residual codebook fitting.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct KMeans {
    pub centroids: Vec<Vec<f32>>,
    /// Index of the centroid owning each input row.
    pub assignment: Vec<usize>,
    /// Within-cluster SSE after each Lloyd iteration.
    pub sse_history: Vec<f64>,
}

#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum()
}

/// Nearest centroid by squared Euclidean distance; ties pick the lowest
/// index.
pub fn nearest(row: &[f32], centroids: &[Vec<f32>]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (idx, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best_d {
            best_d = d;
            best = idx;
        }
    }
    (best, best_d)
}

/// Cluster `rows` into `k` groups: D²-weighted seeding followed by Lloyd
/// iterations until the assignment stops changing (or 100 iterations).
/// Deterministic for a given seed; empty clusters are repaired by promoting
/// the point farthest from its centroid.
pub fn kmeans(rows: &[Vec<f32>], k: usize, seed: u64) -> Result<KMeans> {
    if k == 0 || rows.len() < k {
        return Err(Error::TooFewRows {
            rows: rows.len(),
            requested: k,
        });
    }
    let n = rows.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(rows, k, &mut rng);

    let mut assignment = vec![usize::MAX; n];
    let mut sse_history = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let (c, _) = nearest(row, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        update_means(rows, &assignment, &mut centroids);
        repair_empty_clusters(rows, &mut assignment, &mut centroids);
        sse_history.push(total_sse(rows, &assignment, &centroids));
        if !changed {
            break;
        }
    }

    Ok(KMeans {
        centroids,
        assignment,
        sse_history,
    })
}

fn seed_plus_plus(rows: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f32>> {
    let n = rows.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![rows[first].clone()];
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[first])).collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            // float edge: target landed within terminal rounding error
            pick.unwrap_or_else(|| {
                d2.iter()
                    .rposition(|&w| w > 0.0)
                    .expect("total > 0 implies a positive weight")
            })
        } else {
            // all remaining mass is zero (duplicate rows): take the lowest
            // unchosen index
            (0..n).find(|&i| !chosen[i]).expect("k <= n")
        };
        chosen[next] = true;
        centroids.push(rows[next].clone());
        for (i, row) in rows.iter().enumerate() {
            let d = sq_dist(row, &rows[next]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    centroids
}

fn update_means(rows: &[Vec<f32>], assignment: &[usize], centroids: &mut [Vec<f32>]) {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0f64; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (row, &c) in rows.iter().zip(assignment) {
        counts[c] += 1;
        for (s, &v) in sums[c].iter_mut().zip(row) {
            *s += v as f64;
        }
    }
    for (c, centroid) in centroids.iter_mut().enumerate() {
        if counts[c] == 0 {
            continue; // handled by repair
        }
        for (dst, s) in centroid.iter_mut().zip(&sums[c]) {
            *dst = (s / counts[c] as f64) as f32;
        }
    }
}

fn repair_empty_clusters(rows: &[Vec<f32>], assignment: &mut [usize], centroids: &mut [Vec<f32>]) {
    let mut counts = vec![0usize; centroids.len()];
    for &c in assignment.iter() {
        counts[c] += 1;
    }
    for empty in 0..centroids.len() {
        if counts[empty] > 0 {
            continue;
        }
        // promote the point farthest from its centroid, from a cluster that
        // can spare one
        let mut far: Option<(f64, usize)> = None;
        for (i, row) in rows.iter().enumerate() {
            if counts[assignment[i]] <= 1 {
                continue;
            }
            let d = sq_dist(row, &centroids[assignment[i]]);
            if far.is_none_or(|(fd, _)| d > fd) {
                far = Some((d, i));
            }
        }
        let (_, i) = far.expect("n >= k guarantees a donor cluster");
        counts[assignment[i]] -= 1;
        assignment[i] = empty;
        counts[empty] = 1;
        centroids[empty] = rows[i].clone();
    }
}

fn total_sse(rows: &[Vec<f32>], assignment: &[usize], centroids: &[Vec<f32>]) -> f64 {
    rows.iter()
        .zip(assignment)
        .map(|(row, &c)| sq_dist(row, &centroids[c]))
        .sum()
}
