//! Parsing and validation of the five input datasets: lock/unlock events,
//! electric-fence polygons, POIs, subway stations, and bus stops.
//!
//! Loaders never abort on a dirty row. Every malformed row is counted per
//! reject reason in a [`RejectReport`], and `valid + rejected = total` holds
//! on every input. Fence rings that merely forgot their closing vertex are
//! repaired in place and counted as repairs, not rejections.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{polygon_area_m2, polygon_centroid, LonLat};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// Lock-state flag carried by each event row: 0 = unlocked, 1 = locked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LockStatus {
    Unlocked = 0,
    Locked = 1,
}

impl LockStatus {
    pub fn from_flag(s: &str) -> Option<Self> {
        match s.trim() {
            "0" => Some(LockStatus::Unlocked),
            "1" => Some(LockStatus::Locked),
            _ => None,
        }
    }
}

/// One timestamped lock-state observation of one bicycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BikeEvent {
    pub bicycle_id: String,
    pub timestamp: NaiveDateTime,
    pub position: LonLat,
    pub lock_status: LockStatus,
}

/// An electric-fence parking spot with derived area and capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fence {
    pub fence_id: String,
    /// Closed ring: first vertex equals last.
    pub ring: Vec<LonLat>,
    pub area_m2: f64,
    /// Maximum bicycles the spot holds: max(1, floor(area / slot_area)).
    pub capacity_pc: u32,
    pub centroid: LonLat,
}

impl Fence {
    /// Builds a fence from a raw ring, closing it if necessary.
    ///
    /// Returns `(fence, repaired)` where `repaired` is true when the closing
    /// vertex had to be appended.
    pub fn from_ring_repaired(
        fence_id: String,
        mut ring: Vec<LonLat>,
        slot_area_m2: f64,
    ) -> Result<(Self, bool)> {
        if ring.len() < 3 {
            return Err(Error::DegeneratePolygon(
                "fewer than 3 distinct vertices".into(),
            ));
        }
        let mut repaired = false;
        if ring.first() != ring.last() {
            ring.push(ring[0]);
            repaired = true;
        }
        let area_m2 = polygon_area_m2(&ring)?;
        let capacity_pc = capacity_from_area(area_m2, slot_area_m2);
        let centroid = polygon_centroid(&ring);
        Ok((
            Fence {
                fence_id,
                ring,
                area_m2,
                capacity_pc,
                centroid,
            },
            repaired,
        ))
    }

    pub fn from_ring(fence_id: String, ring: Vec<LonLat>, slot_area_m2: f64) -> Result<Self> {
        Self::from_ring_repaired(fence_id, ring, slot_area_m2).map(|(f, _)| f)
    }
}

/// Parking capacity from fence area at `slot_area_m2` per bicycle slot:
/// max(1, floor(area / slot_area)). The floor tolerates one part in 10⁶,
/// one order above the local-projection error on metre-scale rings, so a
/// fence measuring 5.9999994 m² still yields the 5 slots a 6 m² fence
/// holds. Ratios not within 1e-6 of a slot boundary are unaffected.
pub fn capacity_from_area(area_m2: f64, slot_area_m2: f64) -> u32 {
    let ratio = area_m2 / slot_area_m2;
    ((ratio + ratio.abs() * 1e-6).floor() as i64).max(1) as u32
}

/// The nine POI categories of the study area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoiCategory {
    Transport,
    Shopping,
    Culture,
    Sports,
    Life,
    Landscape,
    Restaurant,
    Medical,
    Company,
}

impl PoiCategory {
    pub const ALL: [PoiCategory; 9] = [
        PoiCategory::Transport,
        PoiCategory::Shopping,
        PoiCategory::Culture,
        PoiCategory::Sports,
        PoiCategory::Life,
        PoiCategory::Landscape,
        PoiCategory::Restaurant,
        PoiCategory::Medical,
        PoiCategory::Company,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoiCategory::Transport => "Transport",
            PoiCategory::Shopping => "Shopping",
            PoiCategory::Culture => "Culture",
            PoiCategory::Sports => "Sports",
            PoiCategory::Life => "Life",
            PoiCategory::Landscape => "Landscape",
            PoiCategory::Restaurant => "Restaurant",
            PoiCategory::Medical => "Medical",
            PoiCategory::Company => "Company",
        }
    }

    /// Index into [`PoiCategory::ALL`], used by the 9x9 transition matrix.
    pub fn index(&self) -> usize {
        Self::ALL.iter().position(|c| c == self).unwrap()
    }
}

impl fmt::Display for PoiCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PoiCategory {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        let t = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.as_str().eq_ignore_ascii_case(t))
            .ok_or(())
    }
}

/// A point of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub name: String,
    pub category: PoiCategory,
    pub position: LonLat,
    pub district: Option<String>,
    pub address: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransitKind {
    Subway,
    Bus,
}

/// A subway station or bus stop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitStation {
    pub kind: TransitKind,
    pub name: String,
    pub line: Option<String>,
    pub position: LonLat,
}

/// Why a row was rejected. Keys in [`RejectReport::rejected`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    BadTimestamp,
    BadCoordinate,
    BadLockFlag,
    MissingField,
    UnknownCategory,
    UnknownKind,
    DegeneratePolygon,
    ZeroArea,
    BadGeometry,
    DuplicateFenceId,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::BadTimestamp => "bad_timestamp",
            RejectReason::BadCoordinate => "bad_coordinate",
            RejectReason::BadLockFlag => "bad_lock_flag",
            RejectReason::MissingField => "missing_field",
            RejectReason::UnknownCategory => "unknown_category",
            RejectReason::UnknownKind => "unknown_kind",
            RejectReason::DegeneratePolygon => "degenerate_polygon",
            RejectReason::ZeroArea => "zero_area",
            RejectReason::BadGeometry => "bad_geometry",
            RejectReason::DuplicateFenceId => "duplicate_fence_id",
        }
    }
}

const MAX_REJECT_SAMPLES: usize = 20;

/// Row accounting for one loader run: `valid_rows + rejected = total_rows`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RejectReport {
    pub total_rows: u64,
    pub valid_rows: u64,
    /// Reject counts keyed by reason.
    pub rejected: BTreeMap<String, u64>,
    /// Rings auto-closed by appending the first vertex. Repairs are not
    /// rejections; repaired rows stay valid.
    pub repaired: u64,
    /// First few reject descriptions, for humans.
    pub samples: Vec<String>,
}

impl RejectReport {
    fn reject(&mut self, row: u64, reason: RejectReason, detail: &str) {
        *self.rejected.entry(reason.as_str().to_string()).or_insert(0) += 1;
        if self.samples.len() < MAX_REJECT_SAMPLES {
            self.samples.push(format!("row {row}: {}: {detail}", reason.as_str()));
        }
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.values().sum()
    }
}

/// Column-name mapping for the events CSV.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(default)]
pub struct EventSchema {
    pub bicycle_id: String,
    pub update_time: String,
    pub longitude: String,
    pub latitude: String,
    pub lock_status: String,
}

impl Default for EventSchema {
    fn default() -> Self {
        EventSchema {
            bicycle_id: "bicycle_id".into(),
            update_time: "update_time".into(),
            longitude: "longitude".into(),
            latitude: "latitude".into(),
            lock_status: "lock_status".into(),
        }
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    Ok(csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

fn header_index(
    headers: &csv::StringRecord,
    name: &str,
    path: &Path,
) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            name: name.to_string(),
        })
}

fn field(record: &csv::StringRecord, idx: usize) -> Option<&str> {
    record.get(idx).filter(|s| !s.is_empty())
}

fn headers_missing(headers: &csv::StringRecord) -> bool {
    headers.is_empty() || (headers.len() == 1 && headers[0].is_empty())
}

fn parse_lonlat(lon: &str, lat: &str) -> Option<LonLat> {
    let lon: f64 = lon.trim().parse().ok()?;
    let lat: f64 = lat.trim().parse().ok()?;
    let p = LonLat::new(lon, lat);
    p.is_valid().then_some(p)
}

/// Loads the events CSV. Malformed rows are rejected per reason; an input
/// with zero valid rows is an [`Error::EmptyInput`].
pub fn load_events(path: &Path, schema: &EventSchema) -> Result<(Vec<BikeEvent>, RejectReport)> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    if headers_missing(&headers) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let idx_id = header_index(&headers, &schema.bicycle_id, path)?;
    let idx_time = header_index(&headers, &schema.update_time, path)?;
    let idx_lon = header_index(&headers, &schema.longitude, path)?;
    let idx_lat = header_index(&headers, &schema.latitude, path)?;
    let idx_lock = header_index(&headers, &schema.lock_status, path)?;

    let mut events = Vec::new();
    let mut report = RejectReport::default();
    for record in reader.records() {
        let record = record?;
        report.total_rows += 1;
        let row = report.total_rows;

        let (Some(id), Some(time), Some(lon), Some(lat), Some(lock)) = (
            field(&record, idx_id),
            field(&record, idx_time),
            field(&record, idx_lon),
            field(&record, idx_lat),
            field(&record, idx_lock),
        ) else {
            report.reject(row, RejectReason::MissingField, "empty or absent field");
            continue;
        };

        let Ok(timestamp) = NaiveDateTime::parse_from_str(time, TIMESTAMP_FORMAT) else {
            report.reject(row, RejectReason::BadTimestamp, time);
            continue;
        };
        let Some(position) = parse_lonlat(lon, lat) else {
            report.reject(row, RejectReason::BadCoordinate, &format!("({lon}, {lat})"));
            continue;
        };
        let Some(lock_status) = LockStatus::from_flag(lock) else {
            report.reject(row, RejectReason::BadLockFlag, lock);
            continue;
        };

        report.valid_rows += 1;
        events.push(BikeEvent {
            bicycle_id: id.to_string(),
            timestamp,
            position,
            lock_status,
        });
    }
    if events.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok((events, report))
}

/// Loads fences from GeoJSON (FeatureCollection of Polygons with a
/// `fence_id` property) or CSV (`fence_id` plus a `vertices` JSON column).
/// The format is sniffed from the first non-whitespace byte.
pub fn load_fences(path: &Path, slot_area_m2: f64) -> Result<(Vec<Fence>, RejectReport)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = fs::read(path)?;
    let is_geojson = bytes
        .iter()
        .find(|b| !b.is_ascii_whitespace())
        .map(|&b| b == b'{')
        .unwrap_or(false);
    let (fences, report) = if is_geojson {
        load_fences_geojson(path, &bytes, slot_area_m2)?
    } else {
        load_fences_csv(path, slot_area_m2)?
    };
    if fences.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok((fences, report))
}

struct FenceAccumulator {
    slot_area_m2: f64,
    seen_ids: std::collections::HashSet<String>,
    fences: Vec<Fence>,
    report: RejectReport,
}

impl FenceAccumulator {
    fn new(slot_area_m2: f64) -> Self {
        FenceAccumulator {
            slot_area_m2,
            seen_ids: Default::default(),
            fences: Vec::new(),
            report: RejectReport::default(),
        }
    }

    fn push_raw(&mut self, fence_id: String, raw_ring: Vec<(f64, f64)>) {
        self.report.total_rows += 1;
        let row = self.report.total_rows;

        if !self.seen_ids.insert(fence_id.clone()) {
            self.report
                .reject(row, RejectReason::DuplicateFenceId, &fence_id);
            return;
        }
        let mut ring = Vec::with_capacity(raw_ring.len());
        for (lon, lat) in raw_ring {
            let p = LonLat::new(lon, lat);
            if !p.is_valid() {
                self.report.reject(
                    row,
                    RejectReason::BadCoordinate,
                    &format!("{fence_id}: ({lon}, {lat})"),
                );
                return;
            }
            ring.push(p);
        }
        let distinct = {
            let open = if ring.len() >= 2 && ring.first() == ring.last() {
                &ring[..ring.len() - 1]
            } else {
                &ring[..]
            };
            let mut v: Vec<(u64, u64)> = open
                .iter()
                .map(|p| (p.lon.to_bits(), p.lat.to_bits()))
                .collect();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        if distinct < 3 {
            self.report.reject(
                row,
                RejectReason::DegeneratePolygon,
                &format!("{fence_id}: {distinct} distinct vertices"),
            );
            return;
        }
        match Fence::from_ring_repaired(fence_id.clone(), ring, self.slot_area_m2) {
            Ok((fence, repaired)) => {
                if repaired {
                    self.report.repaired += 1;
                }
                self.report.valid_rows += 1;
                self.fences.push(fence);
            }
            Err(_) => {
                // Distinct-vertex count passed, so a zero area means the
                // ring is collinear.
                self.report
                    .reject(row, RejectReason::ZeroArea, &fence_id);
            }
        }
    }
}

fn load_fences_geojson(
    path: &Path,
    bytes: &[u8],
    slot_area_m2: f64,
) -> Result<(Vec<Fence>, RejectReport)> {
    let doc: serde_json::Value = serde_json::from_slice(bytes)?;
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            name: "features".into(),
        })?;

    let mut acc = FenceAccumulator::new(slot_area_m2);
    for feature in features {
        let fence_id = feature
            .get("properties")
            .and_then(|p| p.get("fence_id"))
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            });
        let Some(fence_id) = fence_id else {
            acc.report.total_rows += 1;
            let row = acc.report.total_rows;
            acc.report
                .reject(row, RejectReason::MissingField, "feature has no fence_id");
            continue;
        };
        let geometry = feature.get("geometry");
        let is_polygon = geometry
            .and_then(|g| g.get("type"))
            .and_then(|t| t.as_str())
            .map(|t| t == "Polygon")
            .unwrap_or(false);
        let ring = geometry
            .and_then(|g| g.get("coordinates"))
            .and_then(|c| c.as_array())
            .and_then(|rings| rings.first())
            .and_then(|ring| ring.as_array())
            .map(|ring| {
                ring.iter()
                    .map(|pt| {
                        let pair = pt.as_array()?;
                        Some((pair.first()?.as_f64()?, pair.get(1)?.as_f64()?))
                    })
                    .collect::<Option<Vec<(f64, f64)>>>()
            });
        match (is_polygon, ring) {
            (true, Some(Some(raw))) => acc.push_raw(fence_id, raw),
            _ => {
                acc.report.total_rows += 1;
                let row = acc.report.total_rows;
                acc.report
                    .reject(row, RejectReason::BadGeometry, &fence_id);
            }
        }
    }
    Ok((acc.fences, acc.report))
}

fn load_fences_csv(path: &Path, slot_area_m2: f64) -> Result<(Vec<Fence>, RejectReport)> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    if headers_missing(&headers) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let idx_id = header_index(&headers, "fence_id", path)?;
    let idx_vertices = header_index(&headers, "vertices", path)?;

    let mut acc = FenceAccumulator::new(slot_area_m2);
    for record in reader.records() {
        let record = record?;
        let (id, vertices) = match (field(&record, idx_id), field(&record, idx_vertices)) {
            (Some(id), Some(v)) => (id.to_string(), v),
            _ => {
                acc.report.total_rows += 1;
                let row = acc.report.total_rows;
                acc.report
                    .reject(row, RejectReason::MissingField, "empty fence_id or vertices");
                continue;
            }
        };
        match serde_json::from_str::<Vec<(f64, f64)>>(vertices) {
            Ok(raw) => acc.push_raw(id, raw),
            Err(_) => {
                acc.report.total_rows += 1;
                let row = acc.report.total_rows;
                acc.report.reject(row, RejectReason::BadGeometry, &id);
            }
        }
    }
    Ok((acc.fences, acc.report))
}

/// Loads the POI CSV. `address` and `district` columns are optional.
pub fn load_pois(path: &Path) -> Result<(Vec<Poi>, RejectReport)> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    if headers_missing(&headers) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let idx_name = header_index(&headers, "name", path)?;
    let idx_type = header_index(&headers, "type", path)?;
    let idx_lon = header_index(&headers, "longitude", path)?;
    let idx_lat = header_index(&headers, "latitude", path)?;
    let idx_address = headers.iter().position(|h| h == "address");
    let idx_district = headers.iter().position(|h| h == "district");

    let mut pois = Vec::new();
    let mut report = RejectReport::default();
    for record in reader.records() {
        let record = record?;
        report.total_rows += 1;
        let row = report.total_rows;

        let (Some(name), Some(cat), Some(lon), Some(lat)) = (
            field(&record, idx_name),
            field(&record, idx_type),
            field(&record, idx_lon),
            field(&record, idx_lat),
        ) else {
            report.reject(row, RejectReason::MissingField, "empty or absent field");
            continue;
        };
        let Ok(category) = cat.parse::<PoiCategory>() else {
            report.reject(row, RejectReason::UnknownCategory, cat);
            continue;
        };
        let Some(position) = parse_lonlat(lon, lat) else {
            report.reject(row, RejectReason::BadCoordinate, &format!("({lon}, {lat})"));
            continue;
        };
        report.valid_rows += 1;
        pois.push(Poi {
            name: name.to_string(),
            category,
            position,
            district: idx_district.and_then(|i| field(&record, i)).map(str::to_string),
            address: idx_address.and_then(|i| field(&record, i)).map(str::to_string),
        });
    }
    if pois.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok((pois, report))
}

/// Loads the transit CSV (`kind,name,line,longitude,latitude`).
pub fn load_transit(path: &Path) -> Result<(Vec<TransitStation>, RejectReport)> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers()?.clone();
    if headers_missing(&headers) {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let idx_kind = header_index(&headers, "kind", path)?;
    let idx_name = header_index(&headers, "name", path)?;
    let idx_lon = header_index(&headers, "longitude", path)?;
    let idx_lat = header_index(&headers, "latitude", path)?;
    let idx_line = headers.iter().position(|h| h == "line");

    let mut stations = Vec::new();
    let mut report = RejectReport::default();
    for record in reader.records() {
        let record = record?;
        report.total_rows += 1;
        let row = report.total_rows;

        let (Some(kind), Some(name), Some(lon), Some(lat)) = (
            field(&record, idx_kind),
            field(&record, idx_name),
            field(&record, idx_lon),
            field(&record, idx_lat),
        ) else {
            report.reject(row, RejectReason::MissingField, "empty or absent field");
            continue;
        };
        let kind = match kind.to_ascii_lowercase().as_str() {
            "subway" => TransitKind::Subway,
            "bus" => TransitKind::Bus,
            other => {
                report.reject(row, RejectReason::UnknownKind, other);
                continue;
            }
        };
        let Some(position) = parse_lonlat(lon, lat) else {
            report.reject(row, RejectReason::BadCoordinate, &format!("({lon}, {lat})"));
            continue;
        };
        report.valid_rows += 1;
        stations.push(TransitStation {
            kind,
            name: name.to_string(),
            line: idx_line.and_then(|i| field(&record, i)).map(str::to_string),
            position,
        });
    }
    if stations.is_empty() {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok((stations, report))
}
