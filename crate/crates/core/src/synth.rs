//! Deterministic synthetic dataset generator.
//!
//! Emits events/fences/POIs/transit files in the exact ingest formats, a
//! ready-to-run `config.json`, and a `ground_truth.json` holding the planted
//! trips, the exact per-cell flows at every default bin width, and the
//! intended congestion stratum of each fence. The generator is its own
//! oracle: re-ingesting its output must reproduce the truth exactly.
//!
//! Destination choice is biased toward a few small "over" fences and a band
//! of "semi" fences, which organically produces congested spots. Noise
//! events live on dedicated bikes far from every fence, so they exercise the
//! discard paths without touching flows.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{InputPaths, RunConfig, TimeWindow};
use crate::congestion::Flow;
use crate::error::Result;
use crate::geo::{haversine_m, LocalFrame, LonLat};
use crate::ingest::{LockStatus, PoiCategory, TIMESTAMP_FORMAT};

/// Bin widths the ground truth is tabulated at.
pub const TRUTH_WIDTHS_S: [u32; 3] = [300, 900, 1800];

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub fences: usize,
    pub bikes: usize,
    pub trips: usize,
    pub pois: usize,
    pub transit: usize,
    /// Calendar days the feed covers.
    pub days: Vec<NaiveDate>,
    pub window: TimeWindow,
    pub seed: u64,
    /// Leading fences that receive heavy destination bias.
    pub over_fences: usize,
    pub semi_fences: usize,
    /// Lone lock pings on dedicated bikes, placed away from every fence.
    pub noise_events: usize,
    /// Malformed event rows appended to exercise reject accounting.
    pub dirty_rows: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            fences: 20,
            bikes: 50,
            trips: 200,
            pois: 60,
            transit: 6,
            days: vec![
                NaiveDate::from_ymd_opt(2020, 12, 21).unwrap(),
                NaiveDate::from_ymd_opt(2020, 12, 22).unwrap(),
            ],
            window: TimeWindow::default(),
            seed: 7,
            over_fences: 2,
            semi_fences: 4,
            noise_events: 4,
            dirty_rows: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTrip {
    pub bicycle_id: String,
    pub start_time: NaiveDateTime,
    pub end_time: NaiveDateTime,
    pub origin: LonLat,
    pub destination: LonLat,
    pub distance_m: f64,
    pub origin_fence: String,
    pub dest_fence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFlow {
    pub fence_id: String,
    pub bin_start: NaiveDateTime,
    pub width_s: u32,
    pub inflow: u64,
    pub outflow: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    /// Planted trips, sorted by (bicycle_id, start_time); exactly what
    /// reconstruction must recover.
    pub trips: Vec<TruthTrip>,
    /// Exact flow cells per bin width, sorted by (fence_id, bin_start).
    pub flows: BTreeMap<u32, Vec<TruthFlow>>,
    /// Intended stratum per fence: "over" | "semi" | "light".
    pub stratum: BTreeMap<String, String>,
}

impl GroundTruth {
    pub fn flow_map(&self, width_s: u32) -> BTreeMap<(String, NaiveDateTime), Flow> {
        self.flows
            .get(&width_s)
            .map(|v| {
                v.iter()
                    .map(|f| {
                        (
                            (f.fence_id.clone(), f.bin_start),
                            Flow {
                                inflow: f.inflow,
                                outflow: f.outflow,
                            },
                        )
                    })
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// Generated files (name, bytes) plus the ground truth.
pub struct SynthOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub truth: GroundTruth,
}

struct FencePlan {
    id: String,
    frame: LocalFrame,
    w_m: f64,
    h_m: f64,
    stratum: &'static str,
}

impl FencePlan {
    fn ring(&self) -> Vec<LonLat> {
        vec![
            self.frame.to_lonlat(0.0, 0.0),
            self.frame.to_lonlat(self.w_m, 0.0),
            self.frame.to_lonlat(self.w_m, self.h_m),
            self.frame.to_lonlat(0.0, self.h_m),
            self.frame.to_lonlat(0.0, 0.0),
        ]
    }

    /// A point comfortably inside the rectangle.
    fn point_inside(&self, rng: &mut ChaCha8Rng) -> LonLat {
        let x = self.w_m * (0.25 + 0.5 * rng.random::<f64>());
        let y = self.h_m * (0.25 + 0.5 * rng.random::<f64>());
        self.frame.to_lonlat(x, y)
    }
}

const CITY_ORIGIN: LonLat = LonLat {
    lon: 118.06,
    lat: 24.44,
};
const SITE_SPACING_M: f64 = 200.0;

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let city = LocalFrame::centered_at(CITY_ORIGIN);
    let cols = (spec.fences as f64).sqrt().ceil() as usize;

    // Fence sites on a jittered grid; congested strata get small fences so
    // modest net inflow already exceeds capacity.
    let mut fences = Vec::new();
    for i in 0..spec.fences {
        let stratum = if i < spec.over_fences {
            "over"
        } else if i < spec.over_fences + spec.semi_fences {
            "semi"
        } else {
            "light"
        };
        let gx = (i % cols) as f64 * SITE_SPACING_M + rng.random::<f64>() * 20.0;
        let gy = (i / cols) as f64 * SITE_SPACING_M + rng.random::<f64>() * 20.0;
        let site = city.to_lonlat(gx, gy);
        let (w_m, h_m) = match stratum {
            "over" => (1.6 + rng.random::<f64>() * 0.4, 2.0 + rng.random::<f64>() * 0.5),
            "semi" => (1.8 + rng.random::<f64>() * 0.5, 2.5 + rng.random::<f64>() * 1.0),
            _ => (2.0 + rng.random::<f64>() * 0.8, 3.0 + rng.random::<f64>() * 2.0),
        };
        fences.push(FencePlan {
            id: format!("fence-{i:03}"),
            frame: LocalFrame::centered_at(site),
            w_m,
            h_m,
            stratum,
        });
    }

    let light_start = spec.over_fences + spec.semi_fences;
    let dest_weights: Vec<f64> = fences
        .iter()
        .map(|f| match f.stratum {
            "over" => 30.0,
            "semi" => 10.0,
            _ => 1.0,
        })
        .collect();
    let dest_total: f64 = dest_weights.iter().sum();

    // Per-bike scheduling cursors keep each bike's trips disjoint in time.
    let day_count = spec.days.len().max(1);
    let window_start = spec.window.start;
    let window_len = spec.window.length_s();
    let mut cursors: Vec<(usize, i64)> = (0..spec.bikes.max(1))
        .map(|_| (0usize, rng.random_range(0..(window_len / 2).max(1))))
        .collect();

    let mut truth_trips: Vec<TruthTrip> = Vec::new();
    let mut events: Vec<(String, NaiveDateTime, LonLat, LockStatus, Option<usize>)> = Vec::new();

    // Demand peaks between 07:30 and 08:45: short turnarounds inside the
    // peak, long idle gaps outside it, as a morning commute looks.
    let peak = (5_400.min(window_len), 9_900.min(window_len));
    for t in 0..spec.trips {
        let bike_idx = t % spec.bikes.max(1);
        let bike = format!("bike-{bike_idx:03}");
        let (day_idx0, cursor0) = cursors[bike_idx];
        let in_peak = cursor0 >= peak.0 && cursor0 < peak.1;
        let gap = if in_peak {
            rng.random_range(30..180)
        } else {
            rng.random_range(300..1500)
        };
        let duration = rng.random_range(180..900);

        let (mut day_idx, mut cursor) = (day_idx0, cursor0);
        if cursor + gap + duration + 1 > window_len {
            day_idx += 1;
            cursor = rng.random_range(0..300);
        }
        if day_idx >= day_count {
            break; // schedule is full
        }
        let start_off = cursor + gap;
        let end_off = start_off + duration;
        cursors[bike_idx] = (day_idx, end_off);

        // Origin from the light band, destination by stratum weight.
        let origin_idx = if light_start < spec.fences {
            light_start + rng.random_range(0..spec.fences - light_start)
        } else {
            rng.random_range(0..spec.fences)
        };
        let mut dest_idx = {
            let r = rng.random::<f64>() * dest_total;
            let mut cum = 0.0;
            let mut pick = spec.fences - 1;
            for (i, &w) in dest_weights.iter().enumerate() {
                cum += w;
                if cum > r {
                    pick = i;
                    break;
                }
            }
            pick
        };
        if dest_idx == origin_idx {
            dest_idx = (dest_idx + 1) % spec.fences;
        }

        let day = spec.days[day_idx];
        let start_time = day.and_time(window_start) + chrono::Duration::seconds(start_off);
        let end_time = day.and_time(window_start) + chrono::Duration::seconds(end_off);
        let origin = fences[origin_idx].point_inside(&mut rng);
        let destination = fences[dest_idx].point_inside(&mut rng);

        truth_trips.push(TruthTrip {
            bicycle_id: bike.clone(),
            start_time,
            end_time,
            origin,
            destination,
            distance_m: haversine_m(origin, destination),
            origin_fence: fences[origin_idx].id.clone(),
            dest_fence: fences[dest_idx].id.clone(),
        });
        events.push((bike.clone(), start_time, origin, LockStatus::Unlocked, Some(origin_idx)));
        events.push((bike, end_time, destination, LockStatus::Locked, Some(dest_idx)));
    }
    truth_trips.sort_by(|a, b| {
        a.bicycle_id
            .cmp(&b.bicycle_id)
            .then_with(|| a.start_time.cmp(&b.start_time))
    });

    // Noise: lone lock pings on their own bikes, at grid midpoints far from
    // every fence polygon and centroid.
    for k in 0..spec.noise_events {
        let i = rng.random_range(0..spec.fences);
        let gx = (i % cols) as f64 * SITE_SPACING_M + 100.0;
        let gy = (i / cols) as f64 * SITE_SPACING_M + 100.0;
        let pos = city.to_lonlat(gx, gy);
        let day = spec.days[rng.random_range(0..day_count)];
        let ts = day.and_time(window_start)
            + chrono::Duration::seconds(rng.random_range(0..window_len.max(1)));
        events.push((format!("noise-{k:02}"), ts, pos, LockStatus::Locked, None));
    }

    // Exact flow truth from the generated events.
    let mut flows: BTreeMap<u32, Vec<TruthFlow>> = BTreeMap::new();
    for width in TRUTH_WIDTHS_S {
        let mut cells: BTreeMap<(String, NaiveDateTime), Flow> = BTreeMap::new();
        for (_, ts, _, lock, fence_idx) in &events {
            let Some(fi) = fence_idx else { continue };
            let t = ts.time();
            if t < spec.window.start || t >= spec.window.end {
                continue;
            }
            let offset = (t - spec.window.start).num_seconds();
            let bin_start = ts.date().and_time(spec.window.start)
                + chrono::Duration::seconds(offset / width as i64 * width as i64);
            let cell = cells
                .entry((fences[*fi].id.clone(), bin_start))
                .or_default();
            match lock {
                LockStatus::Locked => cell.inflow += 1,
                LockStatus::Unlocked => cell.outflow += 1,
            }
        }
        flows.insert(
            width,
            cells
                .into_iter()
                .map(|((fence_id, bin_start), f)| TruthFlow {
                    fence_id,
                    bin_start,
                    width_s: width,
                    inflow: f.inflow,
                    outflow: f.outflow,
                })
                .collect(),
        );
    }

    // Shuffle event rows so ingestion order proves nothing.
    let mut order: Vec<usize> = (0..events.len()).collect();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }

    let mut events_csv = String::from("bicycle_id,update_time,longitude,latitude,lock_status\n");
    for &i in &order {
        let (bike, ts, pos, lock, _) = &events[i];
        let _ = writeln!(
            events_csv,
            "{},{},{},{},{}",
            bike,
            ts.format(TIMESTAMP_FORMAT),
            pos.lon,
            pos.lat,
            *lock as u8,
        );
    }
    for d in 0..spec.dirty_rows {
        if d % 2 == 0 {
            let _ = writeln!(events_csv, "dirty-{d},NOT A TIME,118.1,24.5,0");
        } else {
            let _ = writeln!(events_csv, "dirty-{d},2020-12-21 08:00:00,118.1,24.5,7");
        }
    }

    // Fence GeoJSON.
    #[derive(Serialize)]
    struct GjGeometry {
        #[serde(rename = "type")]
        kind: &'static str,
        coordinates: Vec<Vec<[f64; 2]>>,
    }
    #[derive(Serialize)]
    struct GjFeature {
        #[serde(rename = "type")]
        kind: &'static str,
        properties: BTreeMap<String, String>,
        geometry: GjGeometry,
    }
    #[derive(Serialize)]
    struct GjCollection {
        #[serde(rename = "type")]
        kind: &'static str,
        features: Vec<GjFeature>,
    }
    let collection = GjCollection {
        kind: "FeatureCollection",
        features: fences
            .iter()
            .map(|f| GjFeature {
                kind: "Feature",
                properties: [("fence_id".to_string(), f.id.clone())].into(),
                geometry: GjGeometry {
                    kind: "Polygon",
                    coordinates: vec![f.ring().iter().map(|p| [p.lon, p.lat]).collect()],
                },
            })
            .collect(),
    };
    let mut fences_geojson = serde_json::to_vec_pretty(&collection)?;
    fences_geojson.push(b'\n');

    // POIs scattered around fence sites, heavy on the index categories.
    let poi_cats = [
        PoiCategory::Transport,
        PoiCategory::Company,
        PoiCategory::Life,
        PoiCategory::Shopping,
        PoiCategory::Restaurant,
        PoiCategory::Culture,
        PoiCategory::Sports,
        PoiCategory::Landscape,
        PoiCategory::Medical,
    ];
    let mut pois_csv = String::from("name,address,district,type,longitude,latitude\n");
    for p in 0..spec.pois {
        let i = rng.random_range(0..spec.fences);
        let gx = (i % cols) as f64 * SITE_SPACING_M + rng.random::<f64>() * 160.0 - 80.0;
        let gy = (i / cols) as f64 * SITE_SPACING_M + rng.random::<f64>() * 160.0 - 80.0;
        let pos = city.to_lonlat(gx, gy);
        // First four categories are roughly twice as likely.
        let r = rng.random_range(0..13);
        let cat = poi_cats[if r < 9 { r } else { (r - 9) % 4 }];
        let _ = writeln!(
            pois_csv,
            "poi-{p:03},addr-{p},synth-district,{},{},{}",
            cat.as_str(),
            pos.lon,
            pos.lat,
        );
    }

    let mut transit_csv = String::from("kind,name,line,longitude,latitude\n");
    for s in 0..spec.transit {
        let gx = s as f64 * SITE_SPACING_M * 1.5;
        let gy = SITE_SPACING_M * 0.5;
        let pos = city.to_lonlat(gx, gy);
        if s % 2 == 0 {
            let _ = writeln!(transit_csv, "subway,station-{s:02},Line 1,{},{}", pos.lon, pos.lat);
        } else {
            let _ = writeln!(transit_csv, "bus,stop-{s:02},,{},{}", pos.lon, pos.lat);
        }
    }

    // Ready-to-run config next to the data.
    let config = RunConfig {
        inputs: InputPaths {
            events: "events.csv".into(),
            fences: "fences.geojson".into(),
            pois: "pois.csv".into(),
            transit: Some("transit.csv".into()),
            trajectories: None,
        },
        out_dir: "out".into(),
        seed: spec.seed,
        ..Default::default()
    };
    let config_json = config.to_pretty_json().into_bytes();

    let truth = GroundTruth {
        seed: spec.seed,
        trips: truth_trips,
        flows,
        stratum: fences
            .iter()
            .map(|f| (f.id.clone(), f.stratum.to_string()))
            .collect(),
    };
    let mut truth_json = serde_json::to_vec_pretty(&truth)?;
    truth_json.push(b'\n');

    Ok(SynthOutput {
        files: vec![
            ("events.csv".to_string(), events_csv.into_bytes()),
            ("fences.geojson".to_string(), fences_geojson),
            ("pois.csv".to_string(), pois_csv.into_bytes()),
            ("transit.csv".to_string(), transit_csv.into_bytes()),
            ("config.json".to_string(), config_json),
            ("ground_truth.json".to_string(), truth_json),
        ],
        truth,
    })
}
