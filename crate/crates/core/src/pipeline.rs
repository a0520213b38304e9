//! End-to-end command drivers shared by the CLI and the C API.
//!
//! A run computes everything in memory first and only then writes output
//! files (each atomically), so a failed run leaves nothing behind except the
//! manifest, which is always written. Stage timings land in the manifest;
//! analysis outputs are byte-identical across runs with equal config and
//! inputs at any thread count.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use crate::clustering::{self, ClassifyOptions};
use crate::config::{DistanceMode, RunConfig};
use crate::congestion::{self, CongestedSpot, FlowGrid};
use crate::error::{Error, Result};
use crate::geo::{FenceIndex, LonLat, PoiIndex};
use crate::ingest;
use crate::manifest::{file_digest, ManifestError, RunManifest};
use crate::output;
use crate::synth::{self, SynthSpec};
use crate::trips::{self, PairingConfig, TripFilter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Trips,
    Congestion,
    Classify,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Trips => "trips",
            Command::Congestion => "congestion",
            Command::Classify => "classify",
        }
    }
}

/// An error tagged with the pipeline stage it surfaced in.
#[derive(Debug)]
pub struct StagedError {
    pub stage: &'static str,
    pub source: Error,
}

impl StagedError {
    pub fn exit_code(&self) -> i32 {
        self.source.exit_code()
    }
}

impl fmt::Display for StagedError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.source)
    }
}

impl std::error::Error for StagedError {}

fn staged<T>(stage: &'static str, r: Result<T>) -> std::result::Result<T, StagedError> {
    r.map_err(|source| StagedError { stage, source })
}

/// Runs a pipeline command. The manifest is written to
/// `out_dir/run_manifest.json` whether the run succeeds or fails.
pub fn run_command(cmd: Command, cfg: &RunConfig) -> std::result::Result<RunManifest, StagedError> {
    let mut manifest = RunManifest::new(cmd.as_str(), cfg);
    let result = {
        let threads = if cfg.threads == 0 {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        } else {
            cfg.threads
        };
        let pool = staged(
            "config",
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}"))),
        )?;
        pool.install(|| execute(cmd, cfg, &mut manifest))
    };
    match result {
        Ok(()) => {
            let bytes = staged("write", output::json_pretty(&manifest))?;
            staged(
                "write",
                output::write_atomic(&cfg.out_dir.join("run_manifest.json"), &bytes),
            )?;
            Ok(manifest)
        }
        Err(e) => {
            manifest.status = "error".to_string();
            manifest.error = Some(ManifestError {
                stage: e.stage.to_string(),
                cause: e.source.to_string(),
                exit_code: e.exit_code(),
            });
            // Best effort: the manifest must outlive the failure.
            if let Ok(bytes) = output::json_pretty(&manifest) {
                let _ = output::write_atomic(&cfg.out_dir.join("run_manifest.json"), &bytes);
            }
            Err(e)
        }
    }
}

struct LoadedInputs {
    events: Vec<ingest::BikeEvent>,
    fences: FenceIndex,
    pois: PoiIndex,
    trajectories: Option<Vec<(String, chrono::NaiveDateTime, LonLat)>>,
}

fn execute(
    cmd: Command,
    cfg: &RunConfig,
    manifest: &mut RunManifest,
) -> std::result::Result<(), StagedError> {
    staged("config", cfg.validate())?;
    staged("ingest", cfg.validate_inputs())?;

    let t0 = Instant::now();
    let loaded = load_inputs(cfg, manifest)?;
    manifest
        .stage_durations_ms
        .push(("ingest".to_string(), t0.elapsed().as_millis()));

    if cmd == Command::Validate {
        return Ok(());
    }

    // Trips stage.
    let t1 = Instant::now();
    let pairing_cfg = PairingConfig {
        max_trip_duration_s: cfg.max_trip_duration_s,
    };
    let (raw_trips, pairing_report) = trips::reconstruct_trips(&loaded.events, &pairing_cfg);
    manifest.pairing = Some(pairing_report);
    let mut kept = trips::filter_trips(
        raw_trips,
        &TripFilter {
            min_m: cfg.min_trip_m,
            max_m: cfg.max_trip_m,
            window: cfg.window,
            excluded_dates: cfg.excluded_dates.clone(),
        },
    );
    trips::assign_od_context(
        &mut kept,
        &loaded.fences,
        &loaded.pois,
        cfg.snap_m,
        cfg.poi_radius_m,
    );
    if cfg.distance_mode == DistanceMode::Trajectory {
        if let Some(points) = &loaded.trajectories {
            trips::apply_trajectory_distances(&mut kept, points);
            // Re-filter: polyline distances can leave the window.
            kept = trips::filter_trips(
                kept,
                &TripFilter {
                    min_m: cfg.min_trip_m,
                    max_m: cfg.max_trip_m,
                    window: cfg.window,
                    excluded_dates: cfg.excluded_dates.clone(),
                },
            );
        }
    }
    let summary = trips::summarize(&kept);
    manifest
        .stage_durations_ms
        .push(("trips".to_string(), t1.elapsed().as_millis()));

    let mut files: Vec<(String, Vec<u8>)> = vec![
        ("trips.csv".to_string(), output::trips_csv(&kept)),
        (
            "summary.json".to_string(),
            staged("trips", output::summary_json(&summary))?,
        ),
    ];

    if cmd != Command::Trips {
        // Congestion stage: every configured width in one run.
        let t2 = Instant::now();
        let mut grids: Vec<FlowGrid> = Vec::new();
        let mut spots_per_width: Vec<Vec<CongestedSpot>> = Vec::new();
        // Excluded dates apply to the whole analysis, not just trips.
        let date_filtered: Option<Vec<ingest::BikeEvent>> = if cfg.excluded_dates.is_empty() {
            None
        } else {
            Some(
                loaded
                    .events
                    .iter()
                    .filter(|e| !cfg.excluded_dates.contains(&e.timestamp.date()))
                    .cloned()
                    .collect(),
            )
        };
        let binnable: &[ingest::BikeEvent] = date_filtered.as_deref().unwrap_or(&loaded.events);
        for &width in &cfg.widths_s {
            let grid = staged(
                "congestion",
                congestion::bin_events(binnable, &loaded.fences, &cfg.window, width, cfg.snap_m),
            )?;
            spots_per_width.push(congestion::identify_congested(
                &grid,
                &loaded.fences,
                cfg.congestion_threshold,
            ));
            grids.push(grid);
        }
        manifest
            .stage_durations_ms
            .push(("congestion".to_string(), t2.elapsed().as_millis()));

        files.push((
            "flows.csv".to_string(),
            output::flows_csv(&grids, &loaded.fences),
        ));
        files.push((
            "congested_spots.csv".to_string(),
            output::congested_spots_csv(&spots_per_width),
        ));
        if cfg.emit_heatmap {
            files.push((
                "heatmap.csv".to_string(),
                output::heatmap_csv(&grids, &loaded.fences),
            ));
        }

        if cmd == Command::Classify {
            let t3 = Instant::now();
            let cluster_idx = cfg
                .widths_s
                .iter()
                .position(|&w| w == cfg.cluster_width_s);
            let cluster_spots: Vec<CongestedSpot> = match cluster_idx {
                Some(i) => spots_per_width[i].clone(),
                None => {
                    let grid = staged(
                        "congestion",
                        congestion::bin_events(
                            binnable,
                            &loaded.fences,
                            &cfg.window,
                            cfg.cluster_width_s,
                            cfg.snap_m,
                        ),
                    )?;
                    congestion::identify_congested(
                        &grid,
                        &loaded.fences,
                        cfg.congestion_threshold,
                    )
                }
            };
            let features = staged(
                "classify",
                clustering::build_features(
                    &cluster_spots,
                    &loaded.fences,
                    &loaded.pois,
                    &cfg.poi_categories,
                    cfg.poi_radius_m,
                ),
            )?;
            let opts = ClassifyOptions {
                k_range: cfg.k_range,
                seed: cfg.seed,
                silhouette_raw: cfg.silhouette_raw,
                ..Default::default()
            };
            let (assignments, report) = staged("classify", clustering::classify(&features, &opts))?;
            manifest
                .stage_durations_ms
                .push(("classify".to_string(), t3.elapsed().as_millis()));

            files.push(("features.csv".to_string(), output::features_csv(&features)));
            files.push(("clusters.csv".to_string(), output::clusters_csv(&assignments)));
            files.push((
                "clusters.geojson".to_string(),
                staged(
                    "classify",
                    output::clusters_geojson(&assignments, &features, &loaded.fences),
                )?,
            ));
            // The report embeds the run config so a result file is
            // self-describing without the manifest. Inputs are echoed as
            // content digests and out_dir is dropped, keeping the report
            // byte-identical wherever the run happens to live on disk.
            let mut config_echo = staged(
                "classify",
                serde_json::to_value(cfg).map_err(Error::from),
            )?;
            if let Some(obj) = config_echo.as_object_mut() {
                obj.remove("inputs");
                obj.remove("out_dir");
                obj.remove("threads");
                obj.insert(
                    "input_digests".to_string(),
                    staged(
                        "classify",
                        serde_json::to_value(&manifest.input_digests).map_err(Error::from),
                    )?,
                );
            }
            let mut report_value = staged(
                "classify",
                serde_json::to_value(&report).map_err(Error::from),
            )?;
            if let Some(obj) = report_value.as_object_mut() {
                obj.insert("config".to_string(), config_echo);
            }
            files.push((
                "model_report.json".to_string(),
                staged("classify", output::json_pretty(&report_value))?,
            ));
        }
    }

    // Write stage: everything computed, now persist atomically.
    let t4 = Instant::now();
    for (name, bytes) in &files {
        staged("write", output::write_atomic(&cfg.out_dir.join(name), bytes))?;
        manifest.outputs.push(name.clone());
    }
    manifest
        .stage_durations_ms
        .push(("write".to_string(), t4.elapsed().as_millis()));
    Ok(())
}

fn load_inputs(
    cfg: &RunConfig,
    manifest: &mut RunManifest,
) -> std::result::Result<LoadedInputs, StagedError> {
    let digest = |manifest: &mut RunManifest, key: &str, path: &Path| -> std::result::Result<(), StagedError> {
        let d = staged("ingest", file_digest(path))?;
        manifest.input_digests.insert(key.to_string(), d);
        Ok(())
    };

    digest(manifest, "events", &cfg.inputs.events)?;
    let (events, events_report) = staged(
        "ingest",
        ingest::load_events(&cfg.inputs.events, &cfg.event_columns),
    )?;
    manifest
        .loader_stats
        .insert("events".to_string(), events_report);

    digest(manifest, "fences", &cfg.inputs.fences)?;
    let (fences, fences_report) = staged(
        "ingest",
        ingest::load_fences(&cfg.inputs.fences, cfg.slot_area_m2),
    )?;
    manifest
        .loader_stats
        .insert("fences".to_string(), fences_report);

    digest(manifest, "pois", &cfg.inputs.pois)?;
    let (pois, pois_report) = staged("ingest", ingest::load_pois(&cfg.inputs.pois))?;
    manifest.loader_stats.insert("pois".to_string(), pois_report);

    if let Some(path) = &cfg.inputs.transit {
        digest(manifest, "transit", path)?;
        let (_stations, transit_report) = staged("ingest", ingest::load_transit(path))?;
        manifest
            .loader_stats
            .insert("transit".to_string(), transit_report);
    }

    let trajectories = match &cfg.inputs.trajectories {
        Some(path) => {
            digest(manifest, "trajectories", path)?;
            Some(staged("ingest", load_trajectories(path))?)
        }
        None => None,
    };

    Ok(LoadedInputs {
        events,
        fences: FenceIndex::build(fences, cfg.cell_size_m),
        pois: PoiIndex::build(pois, cfg.cell_size_m),
        trajectories,
    })
}

/// Trajectory CSV: bicycle_id, timestamp, lon, lat.
fn load_trajectories(path: &Path) -> Result<Vec<(String, chrono::NaiveDateTime, LonLat)>> {
    let schema = ingest::EventSchema::default();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                name: name.to_string(),
            })
    };
    let idx_id = find(&schema.bicycle_id)?;
    let idx_time = find(&schema.update_time)?;
    let idx_lon = find(&schema.longitude)?;
    let idx_lat = find(&schema.latitude)?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let (Some(id), Some(ts), Some(lon), Some(lat)) = (
            record.get(idx_id),
            record.get(idx_time),
            record.get(idx_lon),
            record.get(idx_lat),
        ) else {
            continue;
        };
        let Ok(ts) = chrono::NaiveDateTime::parse_from_str(ts, ingest::TIMESTAMP_FORMAT) else {
            continue;
        };
        let (Ok(lon), Ok(lat)) = (lon.parse::<f64>(), lat.parse::<f64>()) else {
            continue;
        };
        let p = LonLat::new(lon, lat);
        if p.is_valid() {
            out.push((id.to_string(), ts, p));
        }
    }
    Ok(out)
}

/// Writes a synthetic dataset into `out_dir`.
pub fn run_synth(spec: &SynthSpec, out_dir: &Path) -> std::result::Result<Vec<String>, StagedError> {
    let generated = staged("synth", synth::generate(spec))?;
    let mut written = Vec::new();
    for (name, bytes) in &generated.files {
        staged("write", output::write_atomic(&out_dir.join(name), bytes))?;
        written.push(name.clone());
    }
    Ok(written)
}
