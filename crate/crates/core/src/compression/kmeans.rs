//! One-dimensional k-means used to seed per-layer codebooks.

use rand::Rng as _;

use crate::seed::Rng;

const MAX_ITERS: usize = 50;
const TOLERANCE: f64 = 1e-6;

/// Index of the nearest centroid; ties go to the lowest index.
#[inline]
pub fn nearest(value: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, &c) in centroids.iter().enumerate() {
        let d = (value - c) * (value - c);
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// `count` centroids for `values`: k-means++ seeding then Lloyd iterations.
///
/// When there are no more distinct values than `count`, the distinct values are
/// returned, padded with evenly spaced points over `[min, max]`. The result is
/// sorted ascending.
pub fn init_centroids(values: &[f64], count: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(count >= 1, "cluster count must be positive");
    assert!(!values.is_empty(), "cannot cluster an empty layer");

    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() <= count {
        return pad_distinct(distinct, count);
    }

    let mut centroids = kmeans_pp(values, count, rng);
    let mut sums = vec![0.0; count];
    let mut counts = vec![0usize; count];
    for _ in 0..MAX_ITERS {
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for &v in values {
            let j = nearest(v, &centroids);
            sums[j] += v;
            counts[j] += 1;
        }
        let mut shift: f64 = 0.0;
        for j in 0..count {
            // empty clusters keep their position
            if counts[j] > 0 {
                let m = sums[j] / counts[j] as f64;
                shift = shift.max((m - centroids[j]).abs());
                centroids[j] = m;
            }
        }
        if shift < TOLERANCE {
            break;
        }
    }
    centroids.sort_by(f64::total_cmp);
    centroids
}

fn kmeans_pp(values: &[f64], count: usize, rng: &mut Rng) -> Vec<f64> {
    let mut centroids = Vec::with_capacity(count);
    centroids.push(values[rng.random_range(0..values.len())]);
    let mut dist: Vec<f64> = values
        .iter()
        .map(|&v| (v - centroids[0]) * (v - centroids[0]))
        .collect();
    while centroids.len() < count {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = values.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..values.len())
        };
        let c = values[pick];
        centroids.push(c);
        for (d, &v) in dist.iter_mut().zip(values) {
            *d = d.min((v - c) * (v - c));
        }
    }
    centroids
}

fn pad_distinct(mut distinct: Vec<f64>, count: usize) -> Vec<f64> {
    let extra = count - distinct.len();
    if extra == 0 {
        return distinct;
    }
    let lo = distinct[0];
    let hi = distinct[distinct.len() - 1];
    if hi > lo {
        let mut slots = extra + 1;
        loop {
            let fresh: Vec<f64> = (1..slots)
                .map(|k| lo + (hi - lo) * k as f64 / slots as f64)
                .filter(|p| distinct.binary_search_by(|d| d.total_cmp(p)).is_err())
                .collect();
            if fresh.len() >= extra {
                // spread the picks across the grid
                let step = fresh.len() as f64 / extra as f64;
                for k in 0..extra {
                    distinct.push(fresh[(k as f64 * step) as usize]);
                }
                break;
            }
            slots += 1;
        }
    } else {
        let span = 1e-3 * lo.abs().max(1.0);
        distinct.extend((1..=extra).map(|k| lo + span * k as f64));
    }
    distinct.sort_by(f64::total_cmp);
    distinct
}
