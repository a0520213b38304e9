//! Trip reconstruction from per-bicycle event streams, trip filtering, OD
//! context assignment, and descriptive mobility statistics.
//!
//! Pairing policy: per bicycle, in time order, an `Unlocked` event opens a
//! trip that the next `Locked` event closes. Runs of duplicate states are
//! collapsed first (keep the first `Unlocked`, keep the last `Locked`), so
//! the deduplicated stream strictly alternates. Pairs that span more than
//! `max_trip_duration_s`, cross a calendar day, or have non-positive
//! duration are discarded to the report, as are unpaired leading locks and
//! trailing unlocks. Per bicycle:
//! `2 * trips + discarded_events = deduplicated_events`.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TimeWindow;
use crate::geo::{haversine_m, FenceIndex, LonLat, PoiIndex};
use crate::ingest::{BikeEvent, LockStatus, PoiCategory};

/// A reconstructed unlock→lock journey.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub bicycle_id: String,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub origin: LonLat,
    pub destination: LonLat,
    pub distance_m: f64,
    pub duration_s: i64,
    pub origin_fence: Option<String>,
    pub dest_fence: Option<String>,
    pub origin_poi_cat: Option<PoiCategory>,
    pub dest_poi_cat: Option<PoiCategory>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PairingConfig {
    /// Pairs spanning longer than this are discarded (default 4 h).
    pub max_trip_duration_s: i64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        PairingConfig {
            max_trip_duration_s: 4 * 3600,
        }
    }
}

/// Event accounting for one reconstruction run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PairingReport {
    pub total_events: u64,
    pub deduplicated_events: u64,
    /// Events dropped by duplicate-state collapse.
    pub collapsed_duplicates: u64,
    pub trips_paired: u64,
    /// Discarded event counts keyed by reason; pair discards count both
    /// events.
    pub discarded_events: BTreeMap<String, u64>,
}

impl PairingReport {
    fn discard(&mut self, reason: &str, events: u64) {
        *self.discarded_events.entry(reason.to_string()).or_insert(0) += events;
    }

    pub fn discarded_total(&self) -> u64 {
        self.discarded_events.values().sum()
    }

    fn merge(&mut self, other: PairingReport) {
        self.total_events += other.total_events;
        self.deduplicated_events += other.deduplicated_events;
        self.collapsed_duplicates += other.collapsed_duplicates;
        self.trips_paired += other.trips_paired;
        for (k, v) in other.discarded_events {
            *self.discarded_events.entry(k).or_insert(0) += v;
        }
    }
}

/// Reconstructs trips from raw events. Bicycles are independent, so groups
/// are paired in parallel and merged back in `(bicycle_id, start_time)`
/// order; the result is identical at any thread count.
pub fn reconstruct_trips(events: &[BikeEvent], cfg: &PairingConfig) -> (Vec<Trip>, PairingReport) {
    let mut by_bike: BTreeMap<&str, Vec<&BikeEvent>> = BTreeMap::new();
    for e in events {
        by_bike.entry(e.bicycle_id.as_str()).or_default().push(e);
    }

    let groups: Vec<(&str, Vec<&BikeEvent>)> = by_bike
        .into_iter()
        .map(|(bike, mut evs)| {
            evs.sort_by_key(|e| e.timestamp);
            (bike, evs)
        })
        .collect();

    let partials: Vec<(Vec<Trip>, PairingReport)> = groups
        .par_iter()
        .map(|(_, evs)| pair_bike(evs, cfg))
        .collect();

    let mut trips = Vec::new();
    let mut report = PairingReport::default();
    for (mut t, r) in partials {
        trips.append(&mut t);
        report.merge(r);
    }
    (trips, report)
}

fn pair_bike(events: &[&BikeEvent], cfg: &PairingConfig) -> (Vec<Trip>, PairingReport) {
    let mut report = PairingReport {
        total_events: events.len() as u64,
        ..Default::default()
    };

    // Collapse duplicate-state runs: first Unlocked wins, last Locked wins.
    let mut dedup: Vec<&BikeEvent> = Vec::with_capacity(events.len());
    for &e in events {
        match dedup.last_mut() {
            Some(last) if last.lock_status == e.lock_status => {
                if e.lock_status == LockStatus::Locked {
                    *last = e;
                }
                report.collapsed_duplicates += 1;
            }
            _ => dedup.push(e),
        }
    }
    report.deduplicated_events = dedup.len() as u64;

    let mut trips = Vec::new();
    let mut i = 0;
    if dedup.first().map(|e| e.lock_status) == Some(LockStatus::Locked) {
        report.discard("leading_lock", 1);
        i = 1;
    }
    while i + 1 < dedup.len() {
        let unlock = dedup[i];
        let lock = dedup[i + 1];
        debug_assert_eq!(unlock.lock_status, LockStatus::Unlocked);
        debug_assert_eq!(lock.lock_status, LockStatus::Locked);
        let duration_s = (lock.timestamp - unlock.timestamp).num_seconds();
        if duration_s <= 0 {
            report.discard("non_positive_duration", 2);
        } else if duration_s > cfg.max_trip_duration_s {
            report.discard("over_max_duration", 2);
        } else if unlock.timestamp.date() != lock.timestamp.date() {
            report.discard("cross_day", 2);
        } else {
            trips.push(Trip {
                bicycle_id: unlock.bicycle_id.clone(),
                start_time: unlock.timestamp,
                end_time: lock.timestamp,
                origin: unlock.position,
                destination: lock.position,
                distance_m: haversine_m(unlock.position, lock.position),
                duration_s,
                origin_fence: None,
                dest_fence: None,
                origin_poi_cat: None,
                dest_poi_cat: None,
            });
            report.trips_paired += 1;
        }
        i += 2;
    }
    if i < dedup.len() {
        debug_assert_eq!(dedup[i].lock_status, LockStatus::Unlocked);
        report.discard("trailing_unlock", 1);
    }
    (trips, report)
}

/// Trip retention rules of the analysis window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TripFilter {
    /// Closed lower bound in metres.
    pub min_m: f64,
    /// Closed upper bound in metres.
    pub max_m: f64,
    /// Half-open time-of-day window on the start time.
    pub window: TimeWindow,
    pub excluded_dates: std::collections::BTreeSet<NaiveDate>,
}

impl TripFilter {
    pub fn keeps(&self, trip: &Trip) -> bool {
        let t = trip.start_time.time();
        trip.distance_m >= self.min_m
            && trip.distance_m <= self.max_m
            && t >= self.window.start
            && t < self.window.end
            && !self.excluded_dates.contains(&trip.start_time.date())
    }
}

/// Keeps trips with `min_m <= distance <= max_m`, start time inside the
/// half-open window, and start date not excluded. Idempotent.
pub fn filter_trips(trips: Vec<Trip>, filter: &TripFilter) -> Vec<Trip> {
    trips.into_iter().filter(|t| filter.keeps(t)).collect()
}

/// Attaches fence assignments (containment then snap) and nearest-POI
/// categories (within `poi_radius_m`) to both trip endpoints.
pub fn assign_od_context(
    trips: &mut [Trip],
    fences: &FenceIndex,
    pois: &PoiIndex,
    snap_m: f64,
    poi_radius_m: f64,
) {
    trips.par_iter_mut().for_each(|trip| {
        trip.origin_fence = fences.assign(trip.origin, snap_m).map(|f| f.fence_id.clone());
        trip.dest_fence = fences
            .assign(trip.destination, snap_m)
            .map(|f| f.fence_id.clone());
        trip.origin_poi_cat = pois.nearest_within(trip.origin, poi_radius_m).map(|p| p.category);
        trip.dest_poi_cat = pois
            .nearest_within(trip.destination, poi_radius_m)
            .map(|p| p.category);
    });
}

pub const DISTANCE_BIN_M: f64 = 100.0;
pub const DISTANCE_BINS: usize = 100;
pub const DURATION_BIN_S: i64 = 60;
pub const DURATION_BINS: usize = 60;

/// Descriptive distributions over a set of (filtered) trips.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct MobilitySummary {
    pub trips_total: u64,
    pub daily_counts: BTreeMap<NaiveDate, u64>,
    /// Counts per 15-minute time-of-day bin, keyed "HH:MM" of the bin start.
    pub bin_counts_15min: BTreeMap<String, u64>,
    /// 100 m bins covering 0..10 km; the final bin absorbs the 10 km edge.
    pub distance_histogram: Vec<u64>,
    /// 1-minute bins covering 0..60 min; longer trips land in the last bin.
    pub duration_histogram: Vec<u64>,
    /// Origin x destination counts over [`PoiCategory::ALL`] order, for
    /// trips with both endpoint categories assigned.
    pub poi_transition: Vec<Vec<u64>>,
    pub poi_transition_total: u64,
    pub poi_categories: Vec<String>,
    /// Share of trips no longer than 1,000 m.
    pub share_within_1000m: f64,
}

/// Computes the summary. Pure integer accumulation, so the result is
/// invariant to trip order.
pub fn summarize(trips: &[Trip]) -> MobilitySummary {
    let mut s = MobilitySummary {
        distance_histogram: vec![0; DISTANCE_BINS],
        duration_histogram: vec![0; DURATION_BINS],
        poi_transition: vec![vec![0; PoiCategory::ALL.len()]; PoiCategory::ALL.len()],
        poi_categories: PoiCategory::ALL.iter().map(|c| c.to_string()).collect(),
        ..Default::default()
    };
    let mut within_1km = 0u64;
    for trip in trips {
        s.trips_total += 1;
        *s.daily_counts.entry(trip.start_time.date()).or_insert(0) += 1;

        let t = trip.start_time.time();
        let bin_min = (t.hour() * 60 + t.minute()) / 15 * 15;
        let key = format!("{:02}:{:02}", bin_min / 60, bin_min % 60);
        *s.bin_counts_15min.entry(key).or_insert(0) += 1;

        let d_bin = ((trip.distance_m / DISTANCE_BIN_M) as usize).min(DISTANCE_BINS - 1);
        s.distance_histogram[d_bin] += 1;
        let t_bin = ((trip.duration_s / DURATION_BIN_S) as usize).min(DURATION_BINS - 1);
        s.duration_histogram[t_bin] += 1;

        if trip.distance_m <= 1000.0 {
            within_1km += 1;
        }
        if let (Some(o), Some(d)) = (trip.origin_poi_cat, trip.dest_poi_cat) {
            s.poi_transition[o.index()][d.index()] += 1;
            s.poi_transition_total += 1;
        }
    }
    s.share_within_1000m = if s.trips_total == 0 {
        0.0
    } else {
        within_1km as f64 / s.trips_total as f64
    };
    s
}

/// Polyline distance override from an optional trajectory feed.
///
/// For each trip, sums the haversine length of the bicycle's trajectory
/// points inside `[start_time, end_time]`; trips with fewer than two points
/// in range keep their OD distance.
pub fn apply_trajectory_distances(trips: &mut [Trip], points: &[(String, NaiveDateTime, LonLat)]) {
    let mut by_bike: BTreeMap<&str, Vec<(NaiveDateTime, LonLat)>> = BTreeMap::new();
    for (bike, ts, pos) in points {
        by_bike.entry(bike.as_str()).or_default().push((*ts, *pos));
    }
    for track in by_bike.values_mut() {
        track.sort_by_key(|(ts, _)| *ts);
    }
    for trip in trips.iter_mut() {
        let Some(track) = by_bike.get(trip.bicycle_id.as_str()) else {
            continue;
        };
        let in_range: Vec<LonLat> = track
            .iter()
            .filter(|(ts, _)| *ts >= trip.start_time && *ts <= trip.end_time)
            .map(|(_, p)| *p)
            .collect();
        if in_range.len() >= 2 {
            trip.distance_m = in_range.windows(2).map(|w| haversine_m(w[0], w[1])).sum();
        }
    }
}

/// "HH:MM" time-of-day parser for window boundaries.
pub fn parse_hhmm(s: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M:%S"))
        .ok()
}
