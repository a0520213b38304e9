//! Run configuration: one JSON document with every default spelled out, so a
//! run is fully described by (config, input digests).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{EventSchema, PoiCategory};

/// Half-open time-of-day window `[start, end)`, serialized as "HH:MM".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    #[serde(with = "hhmm")]
    pub start: NaiveTime,
    #[serde(with = "hhmm")]
    pub end: NaiveTime,
}

impl TimeWindow {
    pub fn length_s(&self) -> i64 {
        self.end.num_seconds_from_midnight() as i64 - self.start.num_seconds_from_midnight() as i64
    }
}

impl Default for TimeWindow {
    fn default() -> Self {
        TimeWindow {
            start: NaiveTime::from_hms_opt(6, 0, 0).unwrap(),
            end: NaiveTime::from_hms_opt(10, 0, 0).unwrap(),
        }
    }
}

impl FromStr for TimeWindow {
    type Err = Error;

    /// Parses "06:00-10:00".
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once('-')
            .ok_or_else(|| Error::Config(format!("window '{s}' is not HH:MM-HH:MM")))?;
        let parse = |t: &str| {
            crate::trips::parse_hhmm(t.trim())
                .ok_or_else(|| Error::Config(format!("bad time '{t}' in window '{s}'")))
        };
        Ok(TimeWindow {
            start: parse(a)?,
            end: parse(b)?,
        })
    }
}

mod hhmm {
    use chrono::NaiveTime;
    use serde::{self, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(t: &NaiveTime, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&t.format("%H:%M").to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<NaiveTime, D::Error> {
        let s = String::deserialize(d)?;
        crate::trips::parse_hhmm(&s)
            .ok_or_else(|| serde::de::Error::custom(format!("bad HH:MM time '{s}'")))
    }
}

/// How trip distance is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    /// Haversine between the unlock and lock positions.
    #[default]
    OdHaversine,
    /// Sum of the supplied trajectory polyline between unlock and lock.
    Trajectory,
}

/// Input dataset paths. Events, fences, and POIs are required by the
/// analysis commands; transit and trajectories are optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub events: PathBuf,
    pub fences: PathBuf,
    pub pois: PathBuf,
    pub transit: Option<PathBuf>,
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub out_dir: PathBuf,
    /// Morning-peak analysis window.
    pub window: TimeWindow,
    /// Bin widths in seconds; all are computed in one run.
    pub widths_s: Vec<u32>,
    /// Bin width used for the clustering feature row of each fence.
    pub cluster_width_s: u32,
    pub excluded_dates: BTreeSet<NaiveDate>,
    /// Square metres per parking slot when deriving fence capacity.
    pub slot_area_m2: f64,
    /// Snap radius for lock positions outside every fence polygon.
    pub snap_m: f64,
    /// Walking radius for POI context and the POI index.
    pub poi_radius_m: f64,
    /// Categories counted by the POI index numerator.
    pub poi_categories: BTreeSet<PoiCategory>,
    /// Inclusive K sweep for the elbow method.
    pub k_range: (usize, usize),
    pub seed: u64,
    /// Worker threads; 0 means one per core. Outputs are identical at any
    /// value.
    pub threads: usize,
    pub min_trip_m: f64,
    pub max_trip_m: f64,
    pub max_trip_duration_s: i64,
    /// Strict congestion threshold: a bin counts only when C > threshold.
    pub congestion_threshold: f64,
    pub distance_mode: DistanceMode,
    /// Grid-index cell edge in metres.
    pub cell_size_m: f64,
    pub emit_heatmap: bool,
    /// Also report an overall silhouette computed on raw (unstandardized)
    /// features.
    pub silhouette_raw: bool,
    pub event_columns: EventSchema,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: InputPaths::default(),
            out_dir: PathBuf::from("out"),
            window: TimeWindow::default(),
            widths_s: vec![300, 900, 1800],
            cluster_width_s: 900,
            excluded_dates: BTreeSet::new(),
            slot_area_m2: 1.2,
            snap_m: 50.0,
            poi_radius_m: 300.0,
            poi_categories: [
                PoiCategory::Transport,
                PoiCategory::Company,
                PoiCategory::Life,
                PoiCategory::Shopping,
            ]
            .into(),
            k_range: (2, 10),
            seed: 42,
            threads: 1,
            min_trip_m: 100.0,
            max_trip_m: 10_000.0,
            max_trip_duration_s: 4 * 3600,
            congestion_threshold: 1.0,
            distance_mode: DistanceMode::OdHaversine,
            cell_size_m: 250.0,
            emit_heatmap: false,
            silhouette_raw: false,
            event_columns: EventSchema::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_slice(bytes)
            .map_err(|e| Error::Config(format!("config parse failed: {e}")))?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative input/output paths against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Config(format!("config file not found: {}", path.display())));
        }
        let bytes = std::fs::read(path)?;
        let mut cfg = Self::from_json(&bytes)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let rebase_one = |p: &mut PathBuf| {
            if p.as_os_str().is_empty() || p.is_absolute() {
                return;
            }
            *p = dir.join(&*p);
        };
        rebase_one(&mut self.inputs.events);
        rebase_one(&mut self.inputs.fences);
        rebase_one(&mut self.inputs.pois);
        if let Some(t) = &mut self.inputs.transit {
            rebase_one(t);
        }
        if let Some(t) = &mut self.inputs.trajectories {
            rebase_one(t);
        }
        rebase_one(&mut self.out_dir);
    }

    /// Structural checks that do not touch the filesystem.
    pub fn validate(&self) -> Result<()> {
        if self.window.length_s() <= 0 {
            return Err(Error::Config("window end must be after window start".into()));
        }
        if self.widths_s.is_empty() {
            return Err(Error::Config("widths_s must not be empty".into()));
        }
        for &w in &self.widths_s {
            if w == 0 || self.window.length_s() % w as i64 != 0 {
                return Err(Error::Config(format!(
                    "width {w}s does not divide the {}s window",
                    self.window.length_s()
                )));
            }
        }
        if self.cluster_width_s == 0 || self.window.length_s() % self.cluster_width_s as i64 != 0 {
            return Err(Error::Config(format!(
                "cluster_width_s {} does not divide the window",
                self.cluster_width_s
            )));
        }
        if self.slot_area_m2 <= 0.0 {
            return Err(Error::Config("slot_area_m2 must be positive".into()));
        }
        if self.poi_radius_m <= 0.0 {
            return Err(Error::Config("poi_radius_m must be positive".into()));
        }
        if self.poi_categories.is_empty() {
            return Err(Error::Config("poi_categories must not be empty".into()));
        }
        if self.k_range.0 < 2 || self.k_range.0 > self.k_range.1 {
            return Err(Error::Config(format!(
                "k_range ({}, {}) must satisfy 2 <= lo <= hi",
                self.k_range.0, self.k_range.1
            )));
        }
        if self.min_trip_m < 0.0 || self.max_trip_m < self.min_trip_m {
            return Err(Error::Config("trip distance bounds are inverted".into()));
        }
        if self.max_trip_duration_s <= 0 {
            return Err(Error::Config("max_trip_duration_s must be positive".into()));
        }
        if self.cell_size_m <= 0.0 {
            return Err(Error::Config("cell_size_m must be positive".into()));
        }
        if self.distance_mode == DistanceMode::Trajectory && self.inputs.trajectories.is_none() {
            return Err(Error::Config(
                "distance_mode=trajectory requires inputs.trajectories".into(),
            ));
        }
        Ok(())
    }

    /// Filesystem checks for the inputs a command is about to read.
    pub fn validate_inputs(&self) -> Result<()> {
        let mut required: Vec<&PathBuf> =
            vec![&self.inputs.events, &self.inputs.fences, &self.inputs.pois];
        if let Some(t) = &self.inputs.transit {
            required.push(t);
        }
        if let Some(t) = &self.inputs.trajectories {
            required.push(t);
        }
        for path in required {
            if path.as_os_str().is_empty() {
                return Err(Error::Config(
                    "inputs.events, inputs.fences and inputs.pois must be set".into(),
                ));
            }
            if !path.exists() {
                return Err(Error::MissingFile(path.clone()));
            }
        }
        Ok(())
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
