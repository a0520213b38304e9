//! Property-based invariants over the ingest and pairing layers.

use std::io::Write;

use chrono::NaiveDate;
use proptest::prelude::*;

use fenceflow_core::ingest::{load_events, BikeEvent, EventSchema, LockStatus};
use fenceflow_core::trips::{filter_trips, reconstruct_trips, PairingConfig, TripFilter};

/// One raw CSV field for an events row; deliberately includes garbage.
fn field_strategy() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("bike-1".to_string()),
        Just("2020-12-21 08:17:12".to_string()),
        Just("2020-12-21T08:17:12".to_string()),
        Just("118.140385".to_string()),
        Just("24.521156".to_string()),
        Just("480.0".to_string()),
        Just("0".to_string()),
        Just("1".to_string()),
        Just("2".to_string()),
        Just(String::new()),
        Just("yes".to_string()),
    ]
}

proptest! {
    /// Row conservation: valid + rejected = total, whatever the rows hold.
    #[test]
    fn loader_row_conservation(rows in prop::collection::vec(
        prop::collection::vec(field_strategy(), 5),
        0..40,
    )) {
        let mut csv = String::from("bicycle_id,update_time,longitude,latitude,lock_status\n");
        for row in &rows {
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(csv.as_bytes()).unwrap();
        f.flush().unwrap();
        match load_events(f.path(), &EventSchema::default()) {
            Ok((events, report)) => {
                prop_assert_eq!(report.total_rows, rows.len() as u64);
                prop_assert_eq!(report.valid_rows + report.rejected_total(), report.total_rows);
                prop_assert_eq!(events.len() as u64, report.valid_rows);
            }
            Err(fenceflow_core::Error::EmptyInput(_)) => {
                // Allowed exactly when no row is fully valid.
            }
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error: {e}"))),
        }
    }

    /// Pairing conservation and non-overlap for arbitrary event soups.
    #[test]
    fn pairing_conservation(raw in prop::collection::vec(
        (0u8..3, 0i64..172_800, prop::bool::ANY),
        0..120,
    )) {
        let events: Vec<BikeEvent> = raw.iter().map(|&(bike, secs, locked)| BikeEvent {
            bicycle_id: format!("b{bike}"),
            timestamp: NaiveDate::from_ymd_opt(2020, 12, 21).unwrap().and_hms_opt(0, 0, 0).unwrap()
                + chrono::Duration::seconds(secs),
            position: fenceflow_core::geo::LonLat::new(118.1, 24.5),
            lock_status: if locked { LockStatus::Locked } else { LockStatus::Unlocked },
        }).collect();
        let (trips, report) = reconstruct_trips(&events, &PairingConfig::default());
        prop_assert_eq!(report.total_events, events.len() as u64);
        prop_assert_eq!(
            report.deduplicated_events + report.collapsed_duplicates,
            report.total_events
        );
        prop_assert_eq!(
            2 * report.trips_paired + report.discarded_total(),
            report.deduplicated_events
        );
        prop_assert_eq!(trips.len() as u64, report.trips_paired);
        for t in &trips {
            prop_assert!(t.end_time > t.start_time);
            prop_assert!(t.duration_s > 0);
            prop_assert!(t.distance_m >= 0.0);
        }
        for w in trips.windows(2) {
            if w[0].bicycle_id == w[1].bicycle_id {
                prop_assert!(w[0].end_time <= w[1].start_time);
            }
        }
    }

    /// Filtering twice is filtering once, and every kept trip obeys the
    /// bounds.
    #[test]
    fn filter_idempotent_and_sound(distances in prop::collection::vec(0.0f64..20_000.0, 0..60)) {
        let trips: Vec<_> = distances.iter().enumerate().map(|(i, &d)| {
            let start = NaiveDate::from_ymd_opt(2020, 12, 21).unwrap()
                .and_hms_opt(5 + (i as u32 % 6), (i as u32 * 7) % 60, 0).unwrap();
            fenceflow_core::trips::Trip {
                bicycle_id: format!("b{i}"),
                start_time: start,
                end_time: start + chrono::Duration::seconds(300),
                origin: fenceflow_core::geo::LonLat::new(118.1, 24.5),
                destination: fenceflow_core::geo::LonLat::new(118.11, 24.5),
                distance_m: d,
                duration_s: 300,
                origin_fence: None,
                dest_fence: None,
                origin_poi_cat: None,
                dest_poi_cat: None,
            }
        }).collect();
        let filter = TripFilter {
            min_m: 100.0,
            max_m: 10_000.0,
            window: "06:00-10:00".parse().unwrap(),
            excluded_dates: Default::default(),
        };
        let once = filter_trips(trips, &filter);
        for t in &once {
            prop_assert!(t.distance_m >= 100.0 && t.distance_m <= 10_000.0);
            let tod = t.start_time.time();
            prop_assert!(tod >= filter.window.start && tod < filter.window.end);
        }
        let twice = filter_trips(once.clone(), &filter);
        prop_assert_eq!(once, twice);
    }
}
