use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// `O x dim` cluster means.
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Lloyd iterations run by the winning restart.
    pub iterations: usize,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
    /// Index of the winning restart.
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid (lowest index on ties) and its distance.
pub fn nearest(x: &[f64], centroids: ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(x, c.as_slice().expect("standard layout"));
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means with k-means++ seeding, keeping the best of `restarts` runs.
///
/// Restart `r` draws from stream `r` of `seed`, and restarts run in
/// parallel; the winner (lowest inertia, then lowest restart index) does
/// not depend on the thread count.
pub fn kmeans(points: ArrayView2<'_, f64>, o: usize, restarts: usize, seed: u64) -> Result<KMeansResult> {
    let (n, d) = points.dim();
    if o == 0 {
        return Err(Error::config("separate.sources", "cluster count must be positive"));
    }
    if restarts == 0 {
        return Err(Error::config("separate.restarts", "must be at least 1"));
    }
    if n < o {
        return Err(Error::InsufficientData(format!("{n} points for {o} clusters")));
    }
    if d == 0 {
        return Err(Error::InvalidInput("points have dimension zero".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite point coordinate".into()));
    }
    let points = points.as_standard_layout();
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut res = lloyd(points.view(), o, &mut rng);
            res.restart = r;
            res
        })
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, r| if r.inertia < best.inertia { r } else { best })
        .expect("restarts >= 1"))
}

fn plus_plus(points: ArrayView2<'_, f64>, o: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((o, points.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&points.row(first));
    let mut d2: Vec<f64> = points
        .rows()
        .into_iter()
        .map(|p| sq_dist(p.as_slice().unwrap(), centroids.row(0).as_slice().unwrap()))
        .collect();
    for j in 1..o {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(j).assign(&points.row(pick));
        let c = centroids.row(j).to_owned();
        for (dst, p) in d2.iter_mut().zip(points.rows()) {
            *dst = dst.min(sq_dist(p.as_slice().unwrap(), c.as_slice().unwrap()));
        }
    }
    centroids
}

fn means(points: ArrayView2<'_, f64>, labels: &[usize], o: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((o, points.ncols()));
    let mut counts = vec![0usize; o];
    for (p, &l) in points.rows().into_iter().zip(labels) {
        let mut s = sums.row_mut(l);
        s += &p;
        counts[l] += 1;
    }
    for (mut s, &c) in sums.rows_mut().into_iter().zip(&counts) {
        s /= c.max(1) as f64;
    }
    sums
}

/// Assigns every point, then gives each empty cluster the point farthest
/// from its own centroid (taken from clusters with more than one member).
/// Returns the inertia against `centroids`, which repair may move.
fn assign(points: ArrayView2<'_, f64>, centroids: &mut Array2<f64>, labels: &mut [usize]) -> f64 {
    let o = centroids.nrows();
    let mut dist = vec![0.0; labels.len()];
    let mut counts = vec![0usize; o];
    for (i, p) in points.rows().into_iter().enumerate() {
        let (j, dd) = nearest(p.as_slice().unwrap(), centroids.view());
        labels[i] = j;
        dist[i] = dd;
        counts[j] += 1;
    }
    for e in 0..o {
        if counts[e] > 0 {
            continue;
        }
        let mut far: Option<usize> = None;
        for i in 0..labels.len() {
            if counts[labels[i]] > 1 && far.is_none_or(|f| dist[i] > dist[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("n >= O leaves a donor cluster");
        counts[labels[i]] -= 1;
        labels[i] = e;
        counts[e] = 1;
        dist[i] = 0.0;
        centroids.row_mut(e).assign(&points.row(i));
    }
    dist.iter().sum()
}

fn lloyd(points: ArrayView2<'_, f64>, o: usize, rng: &mut ChaCha8Rng) -> KMeansResult {
    let n = points.nrows();
    let mut centroids = plus_plus(points, o, rng);
    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut prev: Option<Vec<usize>> = None;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        history.push(assign(points, &mut centroids, &mut labels));
        centroids = means(points, &labels, o);
        if prev.as_deref() == Some(&labels[..]) {
            break;
        }
        prev = Some(labels.clone());
    }
    let inertia = points
        .rows()
        .into_iter()
        .zip(&labels)
        .map(|(p, &l)| sq_dist(p.as_slice().unwrap(), centroids.row(l).as_slice().unwrap()))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
        inertia_history: history,
        restart: 0,
    }
}

/// Inertia of an arbitrary labeling against its own cluster means.
pub fn labeling_inertia(points: ArrayView2<'_, f64>, labels: &[usize], o: usize) -> f64 {
    let points = points.as_standard_layout();
    let c = means(points.view(), labels, o);
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p.as_slice().unwrap(), c.row(l).as_slice().unwrap()))
        .sum()
}
