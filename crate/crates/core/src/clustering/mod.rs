//! Congested-spot classification: the 4-factor feature matrix, K-means and
//! GMM fits at the elbow-selected K, model selection by silhouette, and the
//! Over-/Semi-/Light-crowded labeling.
//!
//! The four factors per congested fence are its mean congestion, parking
//! capacity, total order count, and POI index. Clustering runs on per-column
//! z-scores; constant columns are dropped (and reported) rather than left to
//! poison the distances.

pub mod gmm;
pub mod kmeans;
pub mod silhouette;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::congestion::CongestedSpot;
use crate::error::{Error, Result};
use crate::geo::{FenceIndex, LonLat, PoiIndex};
use crate::ingest::PoiCategory;

pub use gmm::{gmm_fit, GmmModel};
pub use kmeans::{elbow_select, kmeans_fit, KMeansModel};
pub use silhouette::{silhouette, silhouette_samples};

/// Share of the study area's POIs that sit within `radius_m` of the fence
/// centroid and belong to the chosen categories.
pub fn poi_index(
    centroid: LonLat,
    pois: &PoiIndex,
    categories: &BTreeSet<PoiCategory>,
    radius_m: f64,
) -> Result<f64> {
    if pois.is_empty() {
        return Err(Error::EmptyPoiDataset);
    }
    let nearby = pois
        .within_radius(centroid, radius_m)
        .into_iter()
        .filter(|&i| categories.contains(&pois.pois()[i].category))
        .count();
    Ok(nearby as f64 / pois.len() as f64)
}

/// The raw feature vector of one congested fence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotFeatures {
    pub fence_id: String,
    pub mean_congestion: f64,
    pub capacity_pc: u32,
    pub order_count: u64,
    pub poi_index: f64,
}

impl SpotFeatures {
    pub fn raw(&self) -> [f64; 4] {
        [
            self.mean_congestion,
            self.capacity_pc as f64,
            self.order_count as f64,
            self.poi_index,
        ]
    }
}

pub const FEATURE_NAMES: [&str; 4] = ["mean_congestion", "capacity_pc", "order_count", "poi_index"];

/// Feature rows (sorted by fence_id) plus their standardized matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub spots: Vec<SpotFeatures>,
    /// Per-column z-scores over the kept columns.
    pub standardized: Vec<Vec<f64>>,
    /// Indices into [`FEATURE_NAMES`] that survived standardization.
    pub kept_columns: Vec<usize>,
    pub dropped_columns: Vec<String>,
    pub col_means: Vec<f64>,
    pub col_stds: Vec<f64>,
}

impl FeatureMatrix {
    pub fn is_empty(&self) -> bool {
        self.spots.is_empty()
    }

    /// Raw rows restricted to the kept columns (for `--silhouette-raw`).
    pub fn raw_kept(&self) -> Vec<Vec<f64>> {
        self.spots
            .iter()
            .map(|s| {
                let raw = s.raw();
                self.kept_columns.iter().map(|&c| raw[c]).collect()
            })
            .collect()
    }
}

/// Builds the feature matrix for the congested spots of one bin width.
pub fn build_features(
    spots: &[CongestedSpot],
    fences: &FenceIndex,
    pois: &PoiIndex,
    categories: &BTreeSet<PoiCategory>,
    radius_m: f64,
) -> Result<FeatureMatrix> {
    let mut rows: Vec<SpotFeatures> = spots
        .iter()
        .map(|spot| {
            let fence = fences.get(&spot.fence_id).ok_or_else(|| {
                Error::Internal(format!("congested spot {} has no fence", spot.fence_id))
            })?;
            Ok(SpotFeatures {
                fence_id: spot.fence_id.clone(),
                mean_congestion: spot.mean_congestion,
                capacity_pc: fence.capacity_pc,
                order_count: spot.order_count,
                poi_index: poi_index(fence.centroid, pois, categories, radius_m)?,
            })
        })
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.fence_id.cmp(&b.fence_id));

    let n = rows.len();
    let mut col_means = vec![0.0; 4];
    let mut col_stds = vec![0.0; 4];
    let mut kept_columns = Vec::new();
    let mut dropped_columns = Vec::new();
    if n > 0 {
        for c in 0..4 {
            let mean = rows.iter().map(|r| r.raw()[c]).sum::<f64>() / n as f64;
            let var = rows
                .iter()
                .map(|r| (r.raw()[c] - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            col_means[c] = mean;
            col_stds[c] = var.sqrt();
            if col_stds[c] < 1e-12 {
                dropped_columns.push(FEATURE_NAMES[c].to_string());
            } else {
                kept_columns.push(c);
            }
        }
    }
    let standardized: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            let raw = r.raw();
            kept_columns
                .iter()
                .map(|&c| (raw[c] - col_means[c]) / col_stds[c])
                .collect()
        })
        .collect();
    Ok(FeatureMatrix {
        spots: rows,
        standardized,
        kept_columns,
        dropped_columns,
        col_means,
        col_stds,
    })
}

/// Three-way congestion class, ranked by cluster mean congestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CrowdLabel {
    #[serde(rename = "over-crowded")]
    OverCrowded,
    #[serde(rename = "semi-crowded")]
    SemiCrowded,
    #[serde(rename = "light-crowded")]
    LightCrowded,
}

impl CrowdLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            CrowdLabel::OverCrowded => "over-crowded",
            CrowdLabel::SemiCrowded => "semi-crowded",
            CrowdLabel::LightCrowded => "light-crowded",
        }
    }
}

impl fmt::Display for CrowdLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChosenModel {
    KMeans,
    Gmm,
}

/// One fence's cluster assignment in the chosen model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub fence_id: String,
    pub cluster: usize,
    pub label: Option<CrowdLabel>,
    /// Per-point silhouette on the standardized features.
    pub silhouette: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub count: usize,
    pub share: f64,
    pub mean_congestion: f64,
    pub label: Option<CrowdLabel>,
}

/// Model-selection report for `model_report.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub n_spots: usize,
    pub seed: u64,
    pub k_range: (usize, usize),
    /// (K, inertia) curve from the elbow sweep.
    pub elbow_curve: Vec<(usize, f64)>,
    pub k_star: usize,
    pub kmeans_silhouette: f64,
    pub gmm_silhouette: f64,
    pub kmeans_inertia: f64,
    pub gmm_log_likelihood: f64,
    pub chosen_model: ChosenModel,
    pub overall_silhouette: f64,
    /// Overall silhouette on raw features, when requested.
    pub silhouette_raw: Option<f64>,
    pub clusters: Vec<ClusterSummary>,
    pub dropped_columns: Vec<String>,
    pub degenerate: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    pub k_range: (usize, usize),
    pub seed: u64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub gmm_reg_eps: f64,
    pub silhouette_raw: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            k_range: (2, 10),
            seed: 42,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-6,
            gmm_max_iter: 200,
            gmm_tol: 1e-6,
            gmm_reg_eps: 1e-6,
            silhouette_raw: false,
        }
    }
}

/// Ranks clusters by their mean raw congestion, descending; the top cluster
/// is Over-crowded. Only applies when exactly three clusters are populated.
fn rank_labels(
    features: &FeatureMatrix,
    labels: &[usize],
    k: usize,
) -> Option<Vec<Option<CrowdLabel>>> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (spot, &l) in features.spots.iter().zip(labels) {
        sums[l] += spot.mean_congestion;
        counts[l] += 1;
    }
    let populated: Vec<usize> = (0..k).filter(|&c| counts[c] > 0).collect();
    if populated.len() != 3 {
        return None;
    }
    let mut ranked = populated.clone();
    ranked.sort_by(|&a, &b| {
        let ma = sums[a] / counts[a] as f64;
        let mb = sums[b] / counts[b] as f64;
        mb.partial_cmp(&ma)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut map = vec![None; k];
    map[ranked[0]] = Some(CrowdLabel::OverCrowded);
    map[ranked[1]] = Some(CrowdLabel::SemiCrowded);
    map[ranked[2]] = Some(CrowdLabel::LightCrowded);
    Some(map)
}

/// Full classification: elbow-select K, fit both models, keep the one with
/// the higher silhouette (ties to K-means), and label the clusters when the
/// chosen K yields three populated clusters.
pub fn classify(
    features: &FeatureMatrix,
    opts: &ClassifyOptions,
) -> Result<(Vec<ClusterAssignment>, ModelReport)> {
    let n = features.spots.len();
    let empty_report = |why: &str| ModelReport {
        n_spots: n,
        seed: opts.seed,
        k_range: opts.k_range,
        elbow_curve: Vec::new(),
        k_star: 0,
        kmeans_silhouette: 0.0,
        gmm_silhouette: 0.0,
        kmeans_inertia: 0.0,
        gmm_log_likelihood: 0.0,
        chosen_model: ChosenModel::KMeans,
        overall_silhouette: 0.0,
        silhouette_raw: None,
        clusters: Vec::new(),
        dropped_columns: features.dropped_columns.clone(),
        degenerate: Some(why.to_string()),
    };

    if n == 0 {
        return Ok((Vec::new(), empty_report("no congested spots")));
    }
    if n < opts.k_range.0 || features.kept_columns.is_empty() {
        // Too few spots (or no varying feature) to cluster: one cluster.
        let assignments = features
            .spots
            .iter()
            .map(|s| ClusterAssignment {
                fence_id: s.fence_id.clone(),
                cluster: 0,
                label: None,
                silhouette: 0.0,
            })
            .collect();
        let mut report = empty_report("fewer spots than the smallest k, or all features constant");
        report.clusters = vec![ClusterSummary {
            cluster: 0,
            count: n,
            share: 1.0,
            mean_congestion: features.spots.iter().map(|s| s.mean_congestion).sum::<f64>()
                / n as f64,
            label: None,
        }];
        return Ok((assignments, report));
    }

    let x = &features.standardized;
    let (k_star, elbow_curve) = elbow_select(
        x,
        opts.k_range,
        opts.seed,
        opts.kmeans_max_iter,
        opts.kmeans_tol,
    )?;
    let km = kmeans_fit(x, k_star, opts.seed, opts.kmeans_max_iter, opts.kmeans_tol)?;
    let gm = gmm_fit(
        x,
        k_star,
        opts.seed,
        opts.gmm_max_iter,
        opts.gmm_tol,
        opts.gmm_reg_eps,
    )?;
    let gmm_labels = gm.hard_labels();
    let kmeans_silhouette = silhouette(x, &km.assignments);
    let gmm_silhouette = silhouette(x, &gmm_labels);

    let (chosen_model, labels) = if gmm_silhouette > kmeans_silhouette {
        (ChosenModel::Gmm, gmm_labels)
    } else {
        (ChosenModel::KMeans, km.assignments.clone())
    };
    let overall_silhouette = chosen_silhouette(chosen_model, kmeans_silhouette, gmm_silhouette);
    let samples = silhouette_samples(x, &labels);
    let crowd = if k_star == 3 {
        rank_labels(features, &labels, k_star)
    } else {
        None
    };

    let assignments: Vec<ClusterAssignment> = features
        .spots
        .iter()
        .zip(&labels)
        .zip(&samples)
        .map(|((spot, &cluster), &sil)| ClusterAssignment {
            fence_id: spot.fence_id.clone(),
            cluster,
            label: crowd.as_ref().and_then(|m| m[cluster]),
            silhouette: sil,
        })
        .collect();

    let mut clusters = Vec::new();
    for c in 0..k_star {
        let members: Vec<&SpotFeatures> = features
            .spots
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == c)
            .map(|(s, _)| s)
            .collect();
        if members.is_empty() {
            continue;
        }
        clusters.push(ClusterSummary {
            cluster: c,
            count: members.len(),
            share: members.len() as f64 / n as f64,
            mean_congestion: members.iter().map(|s| s.mean_congestion).sum::<f64>()
                / members.len() as f64,
            label: crowd.as_ref().and_then(|m| m[c]),
        });
    }

    let silhouette_raw = opts
        .silhouette_raw
        .then(|| silhouette(&features.raw_kept(), &labels));

    let report = ModelReport {
        n_spots: n,
        seed: opts.seed,
        k_range: opts.k_range,
        elbow_curve,
        k_star,
        kmeans_silhouette,
        gmm_silhouette,
        kmeans_inertia: km.inertia,
        gmm_log_likelihood: gm.log_likelihood,
        chosen_model,
        overall_silhouette,
        silhouette_raw,
        clusters,
        dropped_columns: features.dropped_columns.clone(),
        degenerate: None,
    };
    Ok((assignments, report))
}

fn chosen_silhouette(model: ChosenModel, km: f64, gm: f64) -> f64 {
    match model {
        ChosenModel::KMeans => km,
        ChosenModel::Gmm => gm,
    }
}
