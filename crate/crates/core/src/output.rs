//! Deterministic CSV / JSON / GeoJSON writers and atomic file output.
//!
//! Every writer produces bytes from already-sorted data with fixed float
//! formatting (Rust's shortest-roundtrip `Display`), so equal inputs give
//! byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::clustering::{ClusterAssignment, FeatureMatrix};
use crate::congestion::{CongestedSpot, FlowGrid};
use crate::error::{Error, Result};
use crate::geo::FenceIndex;
use crate::ingest::TIMESTAMP_FORMAT;
use crate::trips::{MobilitySummary, Trip};

/// Writes via a sibling temp file and rename, so readers never observe a
/// half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .ok_or_else(|| Error::Internal(format!("no parent dir for {}", path.display())))?;
    std::fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Internal(format!("no file name in {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", file_name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn csv_quote(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn trips_csv(trips: &[Trip]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(
        "bicycle_id,start_time,end_time,origin_lon,origin_lat,dest_lon,dest_lat,distance_m,duration_s,origin_fence,dest_fence,origin_poi_cat,dest_poi_cat\n",
    );
    for t in trips {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_quote(&t.bicycle_id),
            t.start_time.format(TIMESTAMP_FORMAT),
            t.end_time.format(TIMESTAMP_FORMAT),
            t.origin.lon,
            t.origin.lat,
            t.destination.lon,
            t.destination.lat,
            t.distance_m,
            t.duration_s,
            csv_quote(t.origin_fence.as_deref().unwrap_or("")),
            csv_quote(t.dest_fence.as_deref().unwrap_or("")),
            t.origin_poi_cat.map(|c| c.as_str()).unwrap_or(""),
            t.dest_poi_cat.map(|c| c.as_str()).unwrap_or(""),
        );
    }
    out.into_bytes()
}

/// Long-form flow rows for all widths, sorted by (width, fence, bin).
pub fn flows_csv(grids: &[FlowGrid], fences: &FenceIndex) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("fence_id,bin_start,width_s,inflow,outflow,net,congestion\n");
    for grid in grids {
        for ((fence_id, bin), flow) in &grid.cells {
            let Some(fence) = fences.get(fence_id) else {
                continue;
            };
            let c = crate::congestion::congestion_of(*flow, fence.capacity_pc);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_quote(fence_id),
                bin.format(TIMESTAMP_FORMAT),
                grid.width_s,
                flow.inflow,
                flow.outflow,
                flow.net(),
                c,
            );
        }
    }
    out.into_bytes()
}

pub fn congested_spots_csv(spots_per_width: &[Vec<CongestedSpot>]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(
        "fence_id,width_s,mean_congestion,n_bins,peak_congestion,peak_bin,order_count\n",
    );
    for spots in spots_per_width {
        for s in spots {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_quote(&s.fence_id),
                s.width_s,
                s.mean_congestion,
                s.congested_bin_count,
                s.peak_congestion,
                s.peak_bin.format(TIMESTAMP_FORMAT),
                s.order_count,
            );
        }
    }
    out.into_bytes()
}

/// Dense per-fence, per-bin congestion rows for external heatmap renderers.
pub fn heatmap_csv(grids: &[FlowGrid], fences: &FenceIndex) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("fence_id,bin_start,width_s,congestion\n");
    for grid in grids {
        let bins_per_day = grid.bins_per_day();
        for (fence_id, days) in grid.active_fence_days() {
            let Some(fence) = fences.get(fence_id) else {
                continue;
            };
            for day in days {
                for idx in 0..bins_per_day {
                    let bin = day.and_time(grid.window.start)
                        + chrono::Duration::seconds(idx as i64 * grid.width_s as i64);
                    let c =
                        crate::congestion::congestion_of(grid.flow(fence_id, bin), fence.capacity_pc);
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        csv_quote(fence_id),
                        bin.format(TIMESTAMP_FORMAT),
                        grid.width_s,
                        c,
                    );
                }
            }
        }
    }
    out.into_bytes()
}

pub fn features_csv(features: &FeatureMatrix) -> Vec<u8> {
    let mut out = String::new();
    out.push_str(
        "fence_id,mean_congestion,capacity_pc,order_count,poi_index,z_mean_congestion,z_capacity_pc,z_order_count,z_poi_index\n",
    );
    for (spot, _) in features.spots.iter().zip(features.standardized.iter()) {
        let raw = spot.raw();
        // Standardized values for dropped columns print empty.
        let z: Vec<String> = (0..4)
            .map(|c| {
                if features.kept_columns.contains(&c) {
                    format!("{}", (raw[c] - features.col_means[c]) / features.col_stds[c])
                } else {
                    String::new()
                }
            })
            .collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            csv_quote(&spot.fence_id),
            spot.mean_congestion,
            spot.capacity_pc,
            spot.order_count,
            spot.poi_index,
            z[0],
            z[1],
            z[2],
            z[3],
        );
    }
    out.into_bytes()
}

pub fn clusters_csv(assignments: &[ClusterAssignment]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("fence_id,cluster,label,silhouette\n");
    for a in assignments {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_quote(&a.fence_id),
            a.cluster,
            a.label.map(|l| l.as_str()).unwrap_or(""),
            a.silhouette,
        );
    }
    out.into_bytes()
}

/// GeoJSON FeatureCollection of the classified fences, loadable in any map
/// viewer.
pub fn clusters_geojson(
    assignments: &[ClusterAssignment],
    features: &FeatureMatrix,
    fences: &FenceIndex,
) -> Result<Vec<u8>> {
    #[derive(Serialize)]
    struct FeatureProps<'a> {
        fence_id: &'a str,
        mean_congestion: f64,
        capacity_pc: u32,
        order_count: u64,
        poi_index: f64,
        cluster: usize,
        label: Option<&'a str>,
    }
    #[derive(Serialize)]
    struct Geometry {
        #[serde(rename = "type")]
        kind: &'static str,
        coordinates: Vec<Vec<[f64; 2]>>,
    }
    #[derive(Serialize)]
    struct Feature<'a> {
        #[serde(rename = "type")]
        kind: &'static str,
        properties: FeatureProps<'a>,
        geometry: Geometry,
    }
    #[derive(Serialize)]
    struct Collection<'a> {
        #[serde(rename = "type")]
        kind: &'static str,
        features: Vec<Feature<'a>>,
    }

    let mut out = Vec::new();
    for (a, spot) in assignments.iter().zip(&features.spots) {
        debug_assert_eq!(a.fence_id, spot.fence_id);
        let fence = fences
            .get(&a.fence_id)
            .ok_or_else(|| Error::Internal(format!("no fence {}", a.fence_id)))?;
        out.push(Feature {
            kind: "Feature",
            properties: FeatureProps {
                fence_id: &a.fence_id,
                mean_congestion: spot.mean_congestion,
                capacity_pc: spot.capacity_pc,
                order_count: spot.order_count,
                poi_index: spot.poi_index,
                cluster: a.cluster,
                label: a.label.map(|l| l.as_str()),
            },
            geometry: Geometry {
                kind: "Polygon",
                coordinates: vec![fence.ring.iter().map(|p| [p.lon, p.lat]).collect()],
            },
        });
    }
    let collection = Collection {
        kind: "FeatureCollection",
        features: out,
    };
    let mut bytes = serde_json::to_vec_pretty(&collection)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn summary_json(summary: &MobilitySummary) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(summary)?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Machine-readable failure payload printed to stderr by the CLI.
pub fn error_json(stage: &str, cause: &str, exit_code: i32) -> String {
    serde_json::json!({
        "stage": stage,
        "cause": cause,
        "exit_code": exit_code,
    })
    .to_string()
}
