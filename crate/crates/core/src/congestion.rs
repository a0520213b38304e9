//! Per-fence, per-time-bin flow counting and congestion density.
//!
//! Congestion density of a fence over a bin is `(inflow - outflow) / Pc`:
//! the within-interval net flow divided by parking capacity. Values above 1
//! mark congested intervals; negative values (net egress) are retained in
//! the grid but never feed congested-spot statistics. A cumulative occupancy
//! variant (`occupancy_mode`) carries stock across bins of a day for callers
//! that want standing occupancy instead of net flow.

use std::collections::BTreeMap;

use chrono::{NaiveDate, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::TimeWindow;
use crate::error::{Error, Result};
use crate::geo::FenceIndex;
use crate::ingest::{BikeEvent, LockStatus};

/// Inflow/outflow counters of one (fence, bin) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flow {
    pub inflow: u64,
    pub outflow: u64,
}

impl Flow {
    pub fn net(&self) -> i64 {
        self.inflow as i64 - self.outflow as i64
    }
}

/// Congestion density: net flow over parking capacity. Negative when more
/// bicycles left than arrived.
pub fn congestion_of(flow: Flow, capacity_pc: u32) -> f64 {
    flow.net() as f64 / capacity_pc as f64
}

/// Sparse (fence x bin) flow grid for one bin width. Cells with no activity
/// are not materialized; absent means zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowGrid {
    pub width_s: u32,
    pub window: TimeWindow,
    /// Flow per (fence_id, bin start). BTreeMap keys give deterministic
    /// iteration for exports.
    pub cells: BTreeMap<(String, NaiveDateTime), Flow>,
    pub assigned_events: u64,
    /// Events inside the window that matched no fence.
    pub unassigned_events: u64,
    /// Events outside the time-of-day window.
    pub out_of_window: u64,
}

impl FlowGrid {
    pub fn bins_per_day(&self) -> u32 {
        (self.window.length_s() / self.width_s as i64) as u32
    }

    pub fn flow(&self, fence_id: &str, bin_start: NaiveDateTime) -> Flow {
        self.cells
            .get(&(fence_id.to_string(), bin_start))
            .copied()
            .unwrap_or_default()
    }

    /// Dates with at least one materialized cell, per fence.
    pub fn active_fence_days(&self) -> BTreeMap<&str, Vec<NaiveDate>> {
        let mut out: BTreeMap<&str, Vec<NaiveDate>> = BTreeMap::new();
        for (fence, bin) in self.cells.keys() {
            let days = out.entry(fence.as_str()).or_default();
            let day = bin.date();
            if days.last() != Some(&day) {
                days.push(day);
            }
        }
        out
    }
}

/// Bins events into a flow grid: each `Locked` event with a fence assignment
/// increments exactly one cell's inflow, each `Unlocked` one cell's outflow.
///
/// Errors with [`Error::WindowMisaligned`] when `width_s` does not divide
/// the window length. Chunks are counted in parallel and merged by integer
/// addition, so the grid is identical at any thread count.
pub fn bin_events(
    events: &[BikeEvent],
    fences: &FenceIndex,
    window: &TimeWindow,
    width_s: u32,
    snap_m: f64,
) -> Result<FlowGrid> {
    let window_s = window.length_s();
    if width_s == 0 || window_s <= 0 || window_s % width_s as i64 != 0 {
        return Err(Error::WindowMisaligned {
            width_s,
            window_s: window_s.max(0) as u32,
        });
    }

    type Partial = (BTreeMap<(String, NaiveDateTime), Flow>, u64, u64, u64);
    let chunk = 1024.max(events.len() / (rayon::current_num_threads().max(1) * 4) + 1);
    let partials: Vec<Partial> = events
        .par_chunks(chunk)
        .map(|evs| {
            let mut cells: BTreeMap<(String, NaiveDateTime), Flow> = BTreeMap::new();
            let (mut assigned, mut unassigned, mut outside) = (0u64, 0u64, 0u64);
            for e in evs {
                let t = e.timestamp.time();
                if t < window.start || t >= window.end {
                    outside += 1;
                    continue;
                }
                let Some(fence) = fences.assign(e.position, snap_m) else {
                    unassigned += 1;
                    continue;
                };
                let offset_s =
                    t.num_seconds_from_midnight() as i64 - window.start.num_seconds_from_midnight() as i64;
                let bin_idx = offset_s / width_s as i64;
                let bin_start = e.timestamp.date().and_time(window.start)
                    + chrono::Duration::seconds(bin_idx * width_s as i64);
                let cell = cells
                    .entry((fence.fence_id.clone(), bin_start))
                    .or_default();
                match e.lock_status {
                    LockStatus::Locked => cell.inflow += 1,
                    LockStatus::Unlocked => cell.outflow += 1,
                }
                assigned += 1;
            }
            (cells, assigned, unassigned, outside)
        })
        .collect();

    let mut grid = FlowGrid {
        width_s,
        window: *window,
        cells: BTreeMap::new(),
        assigned_events: 0,
        unassigned_events: 0,
        out_of_window: 0,
    };
    for (cells, assigned, unassigned, outside) in partials {
        for (key, flow) in cells {
            let cell = grid.cells.entry(key).or_default();
            cell.inflow += flow.inflow;
            cell.outflow += flow.outflow;
        }
        grid.assigned_events += assigned;
        grid.unassigned_events += unassigned;
        grid.out_of_window += outside;
    }
    Ok(grid)
}

/// Sums groups of `factor` consecutive bins into a coarser grid. Inflow and
/// outflow are additive, so aggregating the 5-minute grid 3:1 reproduces the
/// 15-minute grid exactly.
pub fn aggregate(grid: &FlowGrid, factor: u32) -> Result<FlowGrid> {
    if factor == 0 {
        return Err(Error::Internal("aggregation factor must be positive".into()));
    }
    let width_s = grid.width_s * factor;
    let window_s = grid.window.length_s();
    if window_s % width_s as i64 != 0 {
        return Err(Error::WindowMisaligned {
            width_s,
            window_s: window_s as u32,
        });
    }
    let mut cells: BTreeMap<(String, NaiveDateTime), Flow> = BTreeMap::new();
    for ((fence, bin), flow) in &grid.cells {
        let offset_s = bin.time().num_seconds_from_midnight() as i64
            - grid.window.start.num_seconds_from_midnight() as i64;
        let coarse_idx = offset_s / width_s as i64;
        let coarse_start = bin.date().and_time(grid.window.start)
            + chrono::Duration::seconds(coarse_idx * width_s as i64);
        let cell = cells.entry((fence.clone(), coarse_start)).or_default();
        cell.inflow += flow.inflow;
        cell.outflow += flow.outflow;
    }
    Ok(FlowGrid {
        width_s,
        window: grid.window,
        cells,
        assigned_events: grid.assigned_events,
        unassigned_events: grid.unassigned_events,
        out_of_window: grid.out_of_window,
    })
}

/// A fence with at least one bin above the congestion threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestedSpot {
    pub fence_id: String,
    pub width_s: u32,
    /// Mean congestion over the congested bins only (always > threshold).
    pub mean_congestion: f64,
    pub congested_bin_count: u64,
    pub peak_congestion: f64,
    pub peak_bin: NaiveDateTime,
    /// Total inflow + outflow of the fence over the whole window.
    pub order_count: u64,
}

/// Finds fences with any bin where congestion strictly exceeds `threshold`
/// and averages those bins' congestion values. Sorted by mean congestion
/// descending, ties by `fence_id`.
pub fn identify_congested(
    grid: &FlowGrid,
    fences: &FenceIndex,
    threshold: f64,
) -> Vec<CongestedSpot> {
    struct Acc {
        sum: f64,
        n: u64,
        peak: f64,
        peak_bin: NaiveDateTime,
        orders: u64,
    }
    let mut per_fence: BTreeMap<&str, Acc> = BTreeMap::new();
    for ((fence_id, bin), flow) in &grid.cells {
        let Some(fence) = fences.get(fence_id) else {
            continue;
        };
        let c = congestion_of(*flow, fence.capacity_pc);
        let acc = per_fence.entry(fence_id.as_str()).or_insert(Acc {
            sum: 0.0,
            n: 0,
            peak: f64::NEG_INFINITY,
            peak_bin: *bin,
            orders: 0,
        });
        acc.orders += flow.inflow + flow.outflow;
        if c > threshold {
            acc.sum += c;
            acc.n += 1;
            if c > acc.peak {
                acc.peak = c;
                acc.peak_bin = *bin;
            }
        }
    }
    let mut spots: Vec<CongestedSpot> = per_fence
        .into_iter()
        .filter(|(_, acc)| acc.n > 0)
        .map(|(fence_id, acc)| CongestedSpot {
            fence_id: fence_id.to_string(),
            width_s: grid.width_s,
            mean_congestion: acc.sum / acc.n as f64,
            congested_bin_count: acc.n,
            peak_congestion: acc.peak,
            peak_bin: acc.peak_bin,
            order_count: acc.orders,
        })
        .collect();
    spots.sort_by(|a, b| {
        b.mean_congestion
            .partial_cmp(&a.mean_congestion)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.fence_id.cmp(&b.fence_id))
    });
    spots
}

/// Cumulative occupancy alternative: per fence and day, the parked stock is
/// carried across bins (`stock = max(0, stock + inflow - outflow)`,
/// starting from `initial_stock`) and divided by capacity. All bins of an
/// active (fence, day) are materialized; stock resets at each day boundary.
pub fn occupancy_mode(
    grid: &FlowGrid,
    fences: &FenceIndex,
    initial_stock: u64,
) -> BTreeMap<(String, NaiveDateTime), f64> {
    let bins_per_day = grid.bins_per_day();
    let mut out = BTreeMap::new();
    for (fence_id, days) in grid.active_fence_days() {
        let Some(fence) = fences.get(fence_id) else {
            continue;
        };
        for day in days {
            let mut stock = initial_stock as i64;
            for idx in 0..bins_per_day {
                let bin_start = day.and_time(grid.window.start)
                    + chrono::Duration::seconds(idx as i64 * grid.width_s as i64);
                let flow = grid.flow(fence_id, bin_start);
                stock = (stock + flow.net()).max(0);
                out.insert(
                    (fence_id.to_string(), bin_start),
                    stock as f64 / fence.capacity_pc as f64,
                );
            }
        }
    }
    out
}
