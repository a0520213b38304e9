//! Mean silhouette score with Euclidean distances.
//!
//! Conventions, fixed so tests can be exact: a point in a singleton cluster
//! scores 0, a 0/0 ratio (all distances zero) scores 0, and a labeling with
//! fewer than two non-empty clusters scores 0 overall.

use std::collections::BTreeMap;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-point silhouette values s(i) = (b - a) / max(a, b).
pub fn silhouette_samples(x: &[Vec<f64>], labels: &[usize]) -> Vec<f64> {
    assert_eq!(x.len(), labels.len());
    let n = x.len();
    let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *sizes.entry(l).or_insert(0) += 1;
    }
    if sizes.len() < 2 {
        return vec![0.0; n];
    }

    (0..n)
        .map(|i| {
            if sizes[&labels[i]] == 1 {
                return 0.0;
            }
            // Mean distance to every cluster.
            let mut sums: BTreeMap<usize, f64> = sizes.keys().map(|&l| (l, 0.0)).collect();
            for j in 0..n {
                if i == j {
                    continue;
                }
                *sums.get_mut(&labels[j]).unwrap() += euclid(&x[i], &x[j]);
            }
            let own = labels[i];
            let a = sums[&own] / (sizes[&own] - 1) as f64;
            let b = sums
                .iter()
                .filter(|(&l, _)| l != own)
                .map(|(&l, &s)| s / sizes[&l] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect()
}

/// Overall score: the mean of the per-point values, in [-1, 1].
pub fn silhouette(x: &[Vec<f64>], labels: &[usize]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let samples = silhouette_samples(x, labels);
    samples.iter().sum::<f64>() / samples.len() as f64
}
