//! k-means with k-means++ seeding and clustering agreement scores.

use rand::Rng as _;

use super::metrics::{ari, nmi};
use crate::error::{Error, Result};
use crate::rng::{Rng, SeedTree};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Nearest centroid; ties go to the lowest index.
fn nearest(x: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &Tensor, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centroids = vec![points.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random_range(0.0..total);
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        } else {
            // every point coincides with a centroid already
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Lloyd iterations from one k-means++ start.
fn lloyd(points: &Tensor, k: usize, rng: &mut Rng, max_iter: usize) -> KMeansResult {
    let n = points.rows();
    let dim = points.cols();
    let mut centroids = plus_plus(points, k, rng);
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let (j, _) = nearest(points.row(i), &centroids);
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for j in 0..k {
            // an empty cluster keeps its centroid
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points.row(i), &centroids[assign[i]])).sum();
    KMeansResult {
        assignments: assign,
        inertia,
    }
}

/// Best-inertia result over `restarts` seeded runs.
pub fn kmeans(points: &Tensor, k: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    if k < 1 || k > points.rows() {
        return Err(Error::InvalidInput(format!("k = {k} for {} points", points.rows())));
    }
    let seeds = SeedTree::new(seed);
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let res = lloyd(points, k, &mut seeds.indexed("kmeans", r as u64), 300);
        if best.as_ref().is_none_or(|b| res.inertia < b.inertia) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// `(NMI, ARI)` of a 10-restart k-means clustering against `labels`.
pub fn cluster_eval(embeddings: &Tensor, labels: &[usize], k: usize, seed: u64) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::Config(format!("k = {k}; clustering needs k >= 2")));
    }
    if labels.len() != embeddings.rows() {
        return Err(Error::InvalidInput("one label per embedding row required".into()));
    }
    let res = kmeans(embeddings, k, 10, seed)?;
    Ok((nmi(labels, &res.assignments)?, ari(labels, &res.assignments)?))
}
