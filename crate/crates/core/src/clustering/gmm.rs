//! Gaussian mixture fitting by expectation-maximization.
//!
//! Components carry full covariance matrices regularized by `reg_eps` on the
//! diagonal. The fit is initialized from a k-means solution (means from
//! centroids, weights from cluster shares, covariances from within-cluster
//! scatter), then alternates E and M steps until the relative log-likelihood
//! improvement drops below `tol`. The log-likelihood is nondecreasing across
//! iterations; the trace is kept on the model and checked in debug builds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kmeans::kmeans_fit;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmModel {
    pub k: usize,
    /// Mixing weights, strictly positive, summing to 1.
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Full covariance matrices, one d x d matrix per component.
    pub covariances: Vec<Vec<Vec<f64>>>,
    /// Final total log-likelihood L.
    pub log_likelihood: f64,
    /// Posterior responsibilities, one row per point, rows sum to 1.
    pub responsibilities: Vec<Vec<f64>>,
    pub iterations: usize,
    /// Log-likelihood after each E-step, starting from the initial params.
    pub ll_trace: Vec<f64>,
}

impl GmmModel {
    /// Hard assignment: argmax responsibility, ties to the lower component.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.responsibilities
            .iter()
            .map(|row| {
                let mut best = 0usize;
                let mut best_r = row[0];
                for (c, &r) in row.iter().enumerate().skip(1) {
                    if r > best_r {
                        best_r = r;
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

/// Cholesky factor L (lower triangular, A = L Lᵀ) of a symmetric
/// positive-definite matrix, or None when the matrix is not SPD.
fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let d = a.len();
    let mut l = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..=i {
            let dot: f64 = l[i][..j].iter().zip(&l[j][..j]).map(|(x, y)| x * y).sum();
            let sum = a[i][j] - dot;
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

/// Solves L y = b by forward substitution.
fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let d = b.len();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    y
}

struct Component {
    log_weight: f64,
    mean: Vec<f64>,
    chol: Vec<Vec<f64>>,
    /// log det of the covariance (twice the log det of L).
    log_det: f64,
}

impl Component {
    fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let diff: Vec<f64> = x.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let y = forward_solve(&self.chol, &diff);
        let maha: f64 = y.iter().map(|v| v * v).sum();
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + maha)
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

fn build_components(
    weights: &[f64],
    means: &[Vec<f64>],
    covariances: &[Vec<Vec<f64>>],
) -> Result<Vec<Component>> {
    weights
        .iter()
        .zip(means)
        .zip(covariances)
        .enumerate()
        .map(|(c, ((&w, mean), cov))| {
            let chol = cholesky(cov).ok_or(Error::SingularCovariance(c))?;
            let log_det = 2.0 * chol.iter().enumerate().map(|(i, row)| row[i].ln()).sum::<f64>();
            Ok(Component {
                log_weight: w.max(f64::MIN_POSITIVE).ln(),
                mean: mean.clone(),
                chol,
                log_det,
            })
        })
        .collect()
}

/// One E-step: responsibilities and the total log-likelihood.
fn e_step(x: &[Vec<f64>], components: &[Component]) -> (Vec<Vec<f64>>, f64) {
    let mut resp = Vec::with_capacity(x.len());
    let mut ll = 0.0;
    for p in x {
        let logs: Vec<f64> = components
            .iter()
            .map(|c| c.log_weight + c.log_pdf(p))
            .collect();
        let norm = log_sum_exp(&logs);
        ll += norm;
        resp.push(logs.iter().map(|&l| (l - norm).exp()).collect());
    }
    (resp, ll)
}

/// Fits a Gaussian mixture with `k` components.
pub fn gmm_fit(
    x: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    reg_eps: f64,
) -> Result<GmmModel> {
    let n = x.len();
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let dim = x[0].len();

    // K-means initialization: means, shares, within-cluster scatter.
    let km = kmeans_fit(x, k, seed, 300, 1e-6)?;
    let mut counts = vec![0usize; k];
    for &a in &km.assignments {
        counts[a] += 1;
    }
    let mut weights: Vec<f64> = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let mut means = km.centroids.clone();
    let mut covariances: Vec<Vec<Vec<f64>>> = (0..k)
        .map(|c| {
            let mut cov = vec![vec![0.0; dim]; dim];
            if counts[c] > 0 {
                for (p, &a) in x.iter().zip(&km.assignments) {
                    if a != c {
                        continue;
                    }
                    for (i, crow) in cov.iter_mut().enumerate() {
                        let di = p[i] - means[c][i];
                        for (j, v) in crow.iter_mut().enumerate() {
                            *v += di * (p[j] - means[c][j]);
                        }
                    }
                }
                for row in cov.iter_mut() {
                    for v in row.iter_mut() {
                        *v /= counts[c] as f64;
                    }
                }
            }
            for (i, crow) in cov.iter_mut().enumerate() {
                crow[i] += reg_eps;
            }
            cov
        })
        .collect();

    let mut ll_trace: Vec<f64> = Vec::new();
    let mut iterations = 0;
    let (responsibilities, log_likelihood) = loop {
        let components = build_components(&weights, &means, &covariances)?;
        let (resp, ll) = e_step(x, &components);
        if let Some(&prev) = ll_trace.last() {
            debug_assert!(
                ll >= prev - 1e-9 * (1.0 + prev.abs()),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
        }
        let converged = ll_trace
            .last()
            .map(|&prev: &f64| (ll - prev) / prev.abs().max(1.0) < tol)
            .unwrap_or(false);
        ll_trace.push(ll);
        if converged || iterations >= max_iter {
            break (resp, ll);
        }
        iterations += 1;

        // M-step.
        let nk: Vec<f64> = (0..k)
            .map(|c| resp.iter().map(|row| row[c]).sum::<f64>())
            .collect();
        for c in 0..k {
            let nk_safe = nk[c].max(f64::MIN_POSITIVE);
            weights[c] = nk[c] / n as f64;
            let mut mean = vec![0.0; dim];
            for (p, row) in x.iter().zip(&resp) {
                for (m, v) in mean.iter_mut().zip(p) {
                    *m += row[c] * v;
                }
            }
            for m in mean.iter_mut() {
                *m /= nk_safe;
            }
            let mut cov = vec![vec![0.0; dim]; dim];
            for (p, row) in x.iter().zip(&resp) {
                for (i, crow) in cov.iter_mut().enumerate() {
                    let rdi = row[c] * (p[i] - mean[i]);
                    for (j, v) in crow.iter_mut().enumerate() {
                        *v += rdi * (p[j] - mean[j]);
                    }
                }
            }
            for (i, crow) in cov.iter_mut().enumerate() {
                for v in crow.iter_mut() {
                    *v /= nk_safe;
                }
                crow[i] += reg_eps;
            }
            means[c] = mean;
            covariances[c] = cov;
        }
        // Weights must stay a distribution even under float rounding.
        let wsum: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= wsum;
        }
    };

    Ok(GmmModel {
        k,
        weights,
        means,
        covariances,
        log_likelihood,
        responsibilities,
        iterations,
        ll_trace,
    })
}
