//! Lloyd's algorithm with k-means++ seeding, plus elbow-based K selection.
//!
//! Fitting is fully deterministic for a given (data, k, seed): the PRNG is a
//! seeded ChaCha stream, assignment ties go to the lower cluster index, and
//! empty clusters are repaired by a fixed rule. The within-cluster sum of
//! squares never increases across iterations (checked in debug builds).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// J = sum over points of the squared distance to their centroid.
    pub inertia: f64,
    pub assignments: Vec<usize>,
    pub seed: u64,
    pub iterations: usize,
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn assign_all(x: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    x.iter()
        .map(|p| {
            let mut best = 0usize;
            let mut best_d = sq_dist(p, &centroids[0]);
            for (c, centroid) in centroids.iter().enumerate().skip(1) {
                let d = sq_dist(p, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            best
        })
        .collect()
}

fn inertia_of(x: &[Vec<f64>], assignments: &[usize], centroids: &[Vec<f64>]) -> f64 {
    x.iter()
        .zip(assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

/// Moves the point farthest from its centroid into each empty cluster.
/// Deterministic: scans points in index order, never raids a singleton.
fn repair_empty(
    x: &[Vec<f64>],
    assignments: &mut [usize],
    centroids: &mut [Vec<f64>],
    counts: &mut [usize],
) {
    loop {
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut victim: Option<(usize, f64)> = None;
        for (i, p) in x.iter().enumerate() {
            if counts[assignments[i]] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignments[i]]);
            if victim.map(|(_, vd)| d > vd).unwrap_or(true) {
                victim = Some((i, d));
            }
        }
        let Some((i, _)) = victim else {
            // Every remaining cluster is a singleton; leave the empty one to
            // mirror its centroid (cannot happen when k <= n).
            return;
        };
        counts[assignments[i]] -= 1;
        assignments[i] = empty;
        counts[empty] = 1;
        centroids[empty] = x[i].clone();
    }
}

fn kmeans_pp_init(x: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = x.len();
    let first = rng.random_range(0..n);
    let mut centroids = vec![x[first].clone()];
    let mut d2: Vec<f64> = x.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut cum = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                cum += d;
                if cum > r {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // All remaining points coincide with a centroid; take the first
            // index so duplicates still seed deterministically.
            0
        };
        let c = x[next].clone();
        for (i, p) in x.iter().enumerate() {
            let d = sq_dist(p, &c);
            if d < d2[i] {
                d2[i] = d;
            }
        }
        centroids.push(c);
    }
    centroids
}

/// Fits k-means. `k` must not exceed the number of points and the data must
/// be finite.
pub fn kmeans_fit(
    x: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let n = x.len();
    if k == 0 {
        return Err(Error::KTooLarge { k, n });
    }
    if k > n {
        return Err(Error::KTooLarge { k, n });
    }
    if x.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
        return Err(Error::Internal("k-means input contains non-finite values".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp_init(x, k, &mut rng);
    let mut assignments = assign_all(x, &centroids);
    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    repair_empty(x, &mut assignments, &mut centroids, &mut counts);

    let dim = x[0].len();
    let mut prev_j = f64::INFINITY;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        // Update step: centroids move to the mean of their members.
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in x.iter().zip(&assignments) {
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let new: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&new, &centroids[c]).sqrt());
            centroids[c] = new;
        }

        // Assignment step.
        assignments = assign_all(x, &centroids);
        counts.iter_mut().for_each(|c| *c = 0);
        for &a in &assignments {
            counts[a] += 1;
        }
        repair_empty(x, &mut assignments, &mut centroids, &mut counts);

        let j = inertia_of(x, &assignments, &centroids);
        debug_assert!(
            j <= prev_j * (1.0 + 1e-12) + 1e-12,
            "WCSS increased: {prev_j} -> {j}"
        );
        prev_j = j;
        if shift < tol {
            break;
        }
    }

    let inertia = inertia_of(x, &assignments, &centroids);
    Ok(KMeansModel {
        k,
        centroids,
        inertia,
        assignments,
        seed,
        iterations,
    })
}

/// Sweeps K over an inclusive range and picks the elbow: the K whose
/// (K, J_K) point lies farthest from the chord joining the sweep endpoints.
/// Ties go to the smaller K. Returns the pick and the (K, J) curve.
pub fn elbow_select(
    x: &[Vec<f64>],
    k_range: (usize, usize),
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<(usize, Vec<(usize, f64)>)> {
    let (lo, hi) = k_range;
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!("bad k range ({lo}, {hi})")));
    }
    if lo > x.len() {
        return Err(Error::KTooLarge { k: lo, n: x.len() });
    }
    let hi = hi.min(x.len());
    let mut curve = Vec::new();
    for k in lo..=hi {
        let model = kmeans_fit(x, k, seed, max_iter, tol)?;
        curve.push((k, model.inertia));
    }
    if curve.len() == 1 {
        return Ok((lo, curve));
    }
    let (x0, y0) = (curve[0].0 as f64, curve[0].1);
    let (x1, y1) = (curve[curve.len() - 1].0 as f64, curve[curve.len() - 1].1);
    let chord_len = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let mut best_k = curve[0].0;
    let mut best_d = f64::NEG_INFINITY;
    for &(k, j) in &curve {
        let d = if chord_len > 0.0 {
            ((x1 - x0) * (y0 - j) - (x0 - k as f64) * (y1 - y0)).abs() / chord_len
        } else {
            0.0
        };
        if d > best_d {
            best_d = d;
            best_k = k;
        }
    }
    Ok((best_k, curve))
}
