//! Weighted k-means with k-means++ seeding.
//!
//! Identical hidden vectors are collapsed into one weighted point before
//! clustering, so long shared prefixes cost nothing extra.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering<F> {
    pub centroids: Vec<Vec<F>>,
    /// Cluster of each input point, in input order.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares.
    pub wcss: f64,
    /// Index of the restart that produced this clustering.
    pub restart: usize,
}

/// Distinct points with their multiplicities and the map back to inputs.
pub(crate) struct Deduped<'a, F> {
    pub points: Vec<&'a [F]>,
    pub weights: Vec<f64>,
    pub index_of_input: Vec<usize>,
}

pub(crate) fn dedup<'a, F: Scalar>(points: &[&'a [F]]) -> Deduped<'a, F> {
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut out = Deduped {
        points: Vec::new(),
        weights: Vec::new(),
        index_of_input: Vec::with_capacity(points.len()),
    };
    for &p in points {
        let key: Vec<u64> = p.iter().map(|v| v.as_f64().to_bits()).collect();
        let id = *seen.entry(key).or_insert_with(|| {
            out.points.push(p);
            out.weights.push(0.0);
            out.points.len() - 1
        });
        out.weights[id] += 1.0;
        out.index_of_input.push(id);
    }
    out
}

fn dist2<F: Scalar>(a: &[F], b: &[F]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).as_f64();
            d * d
        })
        .sum()
}

fn nearest<F: Scalar>(p: &[F], centroids: &[Vec<F>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2(p, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn weighted_pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut r = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if r < w {
                return i;
            }
            r -= w;
        }
    }
    // rounding left r at the top edge: take the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn plus_plus<F: Scalar>(pts: &[&[F]], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<F>> {
    let first = weighted_pick(rng, weights);
    let mut centroids = vec![pts[first].to_vec()];
    let mut d2: Vec<f64> = pts.iter().map(|p| dist2(p, pts[first])).collect();
    while centroids.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        if scores.iter().all(|&s| s == 0.0) {
            break;
        }
        let next = weighted_pick(rng, &scores);
        for (d, p) in d2.iter_mut().zip(pts) {
            *d = d.min(dist2(p, pts[next]));
        }
        centroids.push(pts[next].to_vec());
    }
    centroids
}

fn lloyd<F: Scalar>(
    pts: &[&[F]],
    weights: &[f64],
    mut centroids: Vec<Vec<F>>,
    max_iters: usize,
) -> (Vec<Vec<F>>, Vec<usize>, f64) {
    let k = centroids.len();
    let dim = pts[0].len();
    let mut assign = vec![usize::MAX; pts.len()];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(pts) {
            let (c, _) = nearest(p, &centroids);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0f64; dim]; k];
        let mut mass = vec![0.0f64; k];
        for ((p, &c), &w) in pts.iter().zip(&assign).zip(weights) {
            mass[c] += w;
            for (s, &v) in sums[c].iter_mut().zip(p.iter()) {
                *s += w * v.as_f64();
            }
        }
        for c in 0..k {
            if mass[c] > 0.0 {
                centroids[c] = sums[c].iter().map(|s| F::of(s / mass[c])).collect();
            }
        }
        // empty clusters take the point farthest from its own centroid
        for c in 0..k {
            if mass[c] > 0.0 {
                continue;
            }
            let far = (0..pts.len())
                .max_by(|&i, &j| {
                    let di = dist2(pts[i], &centroids[assign[i]]);
                    let dj = dist2(pts[j], &centroids[assign[j]]);
                    di.total_cmp(&dj).then(j.cmp(&i))
                })
                .expect("points exist");
            centroids[c] = pts[far].to_vec();
            assign[far] = c;
        }
    }
    let mut wcss = 0.0;
    for ((p, a), &w) in pts.iter().zip(assign.iter_mut()).zip(weights) {
        let (c, d) = nearest(p, &centroids);
        *a = c;
        wcss += w * d;
    }
    (centroids, assign, wcss)
}

/// Best-of-`restarts` clustering of weighted distinct points. `k` must not
/// exceed the number of points.
pub(crate) fn cluster_weighted<F: Scalar>(
    pts: &[&[F]],
    weights: &[f64],
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Clustering<F> {
    assert!(k >= 1 && k <= pts.len(), "k = {k} with {} points", pts.len());
    let runs: Vec<Clustering<F>> = (0..restarts.max(1))
        .into_par_iter()
        .map(|restart| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(restart as u64);
            let init = plus_plus(pts, weights, k, &mut rng);
            let (centroids, assignment, wcss) = lloyd(pts, weights, init, max_iters);
            Clustering {
                centroids,
                assignment,
                wcss,
                restart,
            }
        })
        .collect();
    runs.into_iter()
        .min_by(|a, b| a.wcss.total_cmp(&b.wcss).then(a.restart.cmp(&b.restart)))
        .expect("at least one restart")
}

/// Clusters `points` (repeats allowed) into at most `k` groups.
pub fn kmeans<F: Scalar>(
    points: &[&[F]],
    k: usize,
    seed: u64,
    max_iters: usize,
    restarts: usize,
) -> Clustering<F> {
    let d = dedup(points);
    let k = k.min(d.points.len());
    let c = cluster_weighted(&d.points, &d.weights, k, seed, max_iters, restarts);
    Clustering {
        assignment: d.index_of_input.iter().map(|&i| c.assignment[i]).collect(),
        ..c
    }
}
