//! Uniform-grid spatial index for static fences and POIs.
//!
//! A grid beats a tree here: items are fixed for the life of a run and
//! roughly uniform over the study area, so cell lookup is O(1) and every
//! query is trivially deterministic. Candidate scans return a superset which
//! callers narrow with exact haversine / containment tests.

use std::collections::HashMap;

use super::{haversine_m, point_in_polygon, BBox, LonLat, M_PER_DEG_LAT};
use crate::ingest::{Fence, Poi};

/// Default grid cell edge in metres.
pub const DEFAULT_CELL_SIZE_M: f64 = 250.0;

/// Default snap radius for lock positions that miss every fence polygon.
pub const DEFAULT_SNAP_M: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_size_deg: f64,
    anchor: (f64, f64),
    cells: HashMap<(i64, i64), Vec<u32>>,
    bounds: Option<BBox>,
    max_abs_lat: f64,
}

impl GridIndex {
    /// Builds the index from per-item bounding boxes. The cell size is fixed
    /// in degrees from `cell_size_m` at the dataset's mean latitude.
    pub fn build(bboxes: &[BBox], cell_size_m: f64) -> Self {
        let mut bounds: Option<BBox> = None;
        for bb in bboxes {
            match &mut bounds {
                Some(b) => {
                    b.expand(LonLat::new(bb.min_lon, bb.min_lat));
                    b.expand(LonLat::new(bb.max_lon, bb.max_lat));
                }
                None => bounds = Some(*bb),
            }
        }
        let mean_lat = bounds.map(|b| (b.min_lat + b.max_lat) / 2.0).unwrap_or(0.0);
        let max_abs_lat = bounds
            .map(|b| b.min_lat.abs().max(b.max_lat.abs()))
            .unwrap_or(0.0);
        // One cell spans cell_size_m of longitude at the dataset's mean
        // latitude. Exact filtering happens after the scan, so the grid only
        // has to be conservative, never precise.
        let cos_mean = mean_lat.to_radians().cos().max(1e-6);
        let cell_size_deg = cell_size_m.max(1.0) / (M_PER_DEG_LAT * cos_mean);
        let anchor = bounds
            .map(|b| (b.min_lon, b.min_lat))
            .unwrap_or((0.0, 0.0));

        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (id, bb) in bboxes.iter().enumerate() {
            let (c0, r0) = cell_coord(anchor, cell_size_deg, bb.min_lon, bb.min_lat);
            let (c1, r1) = cell_coord(anchor, cell_size_deg, bb.max_lon, bb.max_lat);
            for c in c0..=c1 {
                for r in r0..=r1 {
                    cells.entry((c, r)).or_default().push(id as u32);
                }
            }
        }
        for ids in cells.values_mut() {
            ids.sort_unstable();
            ids.dedup();
        }
        GridIndex {
            cell_size_deg,
            anchor,
            cells,
            bounds,
            max_abs_lat,
        }
    }

    pub fn bounds(&self) -> Option<BBox> {
        self.bounds
    }

    /// Item ids indexed in the cell containing `p`, ascending.
    pub fn candidates_at(&self, p: LonLat) -> &[u32] {
        let key = cell_coord(self.anchor, self.cell_size_deg, p.lon, p.lat);
        self.cells.get(&key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Item ids from every cell overlapping a degree-space box, sorted and
    /// deduplicated.
    pub fn candidates_in_bbox(&self, q: &BBox) -> Vec<u32> {
        let (c0, r0) = cell_coord(self.anchor, self.cell_size_deg, q.min_lon, q.min_lat);
        let (c1, r1) = cell_coord(self.anchor, self.cell_size_deg, q.max_lon, q.max_lat);
        let mut out = Vec::new();
        for c in c0..=c1 {
            for r in r0..=r1 {
                if let Some(ids) = self.cells.get(&(c, r)) {
                    out.extend_from_slice(ids);
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Superset of the items within `radius_m` of `center`. Longitude padding
    /// uses the most extreme latitude in play, so the scan never undershoots.
    pub fn candidates_in_radius(&self, center: LonLat, radius_m: f64) -> Vec<u32> {
        let pad_lat = radius_m.max(0.0) / M_PER_DEG_LAT;
        let lat_extreme = self
            .max_abs_lat
            .max(center.lat.abs() + pad_lat)
            .min(89.9);
        let cos_lat = lat_extreme.to_radians().cos().max(1e-6);
        let pad_lon = radius_m.max(0.0) / (M_PER_DEG_LAT * cos_lat);
        self.candidates_in_bbox(&BBox {
            min_lon: center.lon - pad_lon,
            min_lat: center.lat - pad_lat,
            max_lon: center.lon + pad_lon,
            max_lat: center.lat + pad_lat,
        })
    }
}

fn cell_coord(anchor: (f64, f64), cell_size_deg: f64, lon: f64, lat: f64) -> (i64, i64) {
    (
        ((lon - anchor.0) / cell_size_deg).floor() as i64,
        ((lat - anchor.1) / cell_size_deg).floor() as i64,
    )
}

/// Fences plus their grid index. Fences are held sorted by `fence_id`, so all
/// tie-breaks reduce to index order and insertion order can never leak into
/// an answer.
#[derive(Debug, Clone)]
pub struct FenceIndex {
    grid: GridIndex,
    fences: Vec<Fence>,
}

impl FenceIndex {
    pub fn build(mut fences: Vec<Fence>, cell_size_m: f64) -> Self {
        fences.sort_by(|a, b| a.fence_id.cmp(&b.fence_id));
        let bboxes: Vec<BBox> = fences
            .iter()
            .map(|f| BBox::of_ring(&f.ring).expect("fence ring is non-empty"))
            .collect();
        FenceIndex {
            grid: GridIndex::build(&bboxes, cell_size_m),
            fences,
        }
    }

    pub fn fences(&self) -> &[Fence] {
        &self.fences
    }

    pub fn len(&self) -> usize {
        self.fences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fences.is_empty()
    }

    pub fn get(&self, fence_id: &str) -> Option<&Fence> {
        self.fences
            .binary_search_by(|f| f.fence_id.as_str().cmp(fence_id))
            .ok()
            .map(|i| &self.fences[i])
    }

    /// The fence whose polygon contains `p`, smallest `fence_id` first when
    /// fences overlap.
    pub fn containing(&self, p: LonLat) -> Option<&Fence> {
        self.grid
            .candidates_at(p)
            .iter()
            .map(|&i| &self.fences[i as usize])
            .find(|f| point_in_polygon(p, &f.ring))
    }

    /// The fence with the nearest centroid within `max_m`, ties broken by
    /// smaller haversine distance then lexicographically smaller `fence_id`.
    pub fn nearest_within(&self, p: LonLat, max_m: f64) -> Option<&Fence> {
        let mut best: Option<(f64, &Fence)> = None;
        for &i in &self.grid.candidates_in_radius(p, max_m) {
            let f = &self.fences[i as usize];
            let d = haversine_m(p, f.centroid);
            if d > max_m {
                continue;
            }
            // Candidates arrive in ascending fence_id order, so strict
            // less-than keeps the smallest id on ties.
            if best.map(|(bd, _)| d < bd).unwrap_or(true) {
                best = Some((d, f));
            }
        }
        best.map(|(_, f)| f)
    }

    /// Containment-then-snap assignment of a GPS point to a fence.
    pub fn assign(&self, p: LonLat, snap_m: f64) -> Option<&Fence> {
        self.containing(p).or_else(|| self.nearest_within(p, snap_m))
    }
}

/// POIs plus a point grid index supporting radius and nearest queries.
#[derive(Debug, Clone)]
pub struct PoiIndex {
    grid: GridIndex,
    pois: Vec<Poi>,
}

impl PoiIndex {
    pub fn build(pois: Vec<Poi>, cell_size_m: f64) -> Self {
        let bboxes: Vec<BBox> = pois.iter().map(|p| BBox::of_point(p.position)).collect();
        PoiIndex {
            grid: GridIndex::build(&bboxes, cell_size_m),
            pois,
        }
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }

    /// Indices of POIs within `radius_m` of `center` (exact haversine
    /// filter), ascending.
    pub fn within_radius(&self, center: LonLat, radius_m: f64) -> Vec<usize> {
        self.grid
            .candidates_in_radius(center, radius_m)
            .into_iter()
            .map(|i| i as usize)
            .filter(|&i| haversine_m(center, self.pois[i].position) <= radius_m)
            .collect()
    }

    /// Nearest POI within `radius_m`; ties broken by distance, then name,
    /// then category so the answer is independent of input order.
    pub fn nearest_within(&self, center: LonLat, radius_m: f64) -> Option<&Poi> {
        self.within_radius(center, radius_m)
            .into_iter()
            .map(|i| {
                let poi = &self.pois[i];
                (haversine_m(center, poi.position), poi)
            })
            .min_by(|(da, pa), (db, pb)| {
                da.partial_cmp(db)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| pa.name.cmp(&pb.name))
                    .then_with(|| pa.category.as_str().cmp(pb.category.as_str()))
            })
            .map(|(_, poi)| poi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalFrame;
    use crate::ingest::{Fence, Poi, PoiCategory};
    use rand::{Rng, SeedableRng};

    fn rect_fence(id: &str, origin: LonLat, w_m: f64, h_m: f64) -> Fence {
        let frame = LocalFrame::centered_at(origin);
        let ring = vec![
            frame.to_lonlat(0.0, 0.0),
            frame.to_lonlat(w_m, 0.0),
            frame.to_lonlat(w_m, h_m),
            frame.to_lonlat(0.0, h_m),
            frame.to_lonlat(0.0, 0.0),
        ];
        Fence::from_ring(id.to_string(), ring, 1.2).unwrap()
    }

    #[test]
    fn containment_beats_snap() {
        let base = LonLat::new(118.10, 24.50);
        let frame = LocalFrame::centered_at(base);
        let inside = rect_fence("zz-inside", base, 10.0, 10.0);
        // A second fence whose centroid is closer to the probe point than
        // the containing fence's centroid.
        let near = rect_fence("aa-near", frame.to_lonlat(12.0, 0.0), 4.0, 4.0);
        let idx = FenceIndex::build(vec![near, inside], 250.0);
        let probe = frame.to_lonlat(9.5, 5.0);
        assert_eq!(idx.assign(probe, 50.0).unwrap().fence_id, "zz-inside");
    }

    #[test]
    fn snap_within_and_beyond_radius() {
        let base = LonLat::new(118.10, 24.50);
        let frame = LocalFrame::centered_at(base);
        let fence = rect_fence("only", base, 4.0, 4.0);
        let idx = FenceIndex::build(vec![fence], 250.0);
        let centroid = idx.fences()[0].centroid;
        let at_30m = LonLat::new(centroid.lon, centroid.lat + 30.0 / M_PER_DEG_LAT);
        let at_80m = LonLat::new(centroid.lon, centroid.lat + 80.0 / M_PER_DEG_LAT);
        assert_eq!(idx.assign(at_30m, 50.0).unwrap().fence_id, "only");
        assert!(idx.assign(at_80m, 50.0).is_none());
        let _ = frame;
    }

    #[test]
    fn nearest_tie_breaks_by_fence_id() {
        let base = LonLat::new(118.10, 24.50);
        let frame = LocalFrame::centered_at(base);
        // Two identical fences mirrored about the probe point.
        let left = rect_fence("b-left", frame.to_lonlat(-24.0, -2.0), 4.0, 4.0);
        let right = rect_fence("a-right", frame.to_lonlat(20.0, -2.0), 4.0, 4.0);
        let idx = FenceIndex::build(vec![left, right], 250.0);
        let got = idx.assign(base, 50.0).unwrap();
        assert_eq!(got.fence_id, "a-right");
    }

    #[test]
    fn insertion_order_never_changes_answers() {
        let base = LonLat::new(118.10, 24.50);
        let frame = LocalFrame::centered_at(base);
        let mut fences = Vec::new();
        for i in 0..12 {
            let x = (i % 4) as f64 * 60.0;
            let y = (i / 4) as f64 * 60.0;
            fences.push(rect_fence(&format!("f{i:02}"), frame.to_lonlat(x, y), 6.0, 6.0));
        }
        let idx_a = FenceIndex::build(fences.clone(), 100.0);
        fences.reverse();
        let idx_b = FenceIndex::build(fences, 100.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let x = rng.random::<f64>() * 260.0 - 40.0;
            let y = rng.random::<f64>() * 260.0 - 40.0;
            let p = frame.to_lonlat(x, y);
            let a = idx_a.assign(p, 50.0).map(|f| f.fence_id.clone());
            let b = idx_b.assign(p, 50.0).map(|f| f.fence_id.clone());
            assert_eq!(a, b);
        }
    }

    #[test]
    fn radius_query_matches_brute_force() {
        let base = LonLat::new(118.10, 24.50);
        let frame = LocalFrame::centered_at(base);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pois: Vec<Poi> = (0..200)
            .map(|i| {
                let x = rng.random::<f64>() * 2000.0;
                let y = rng.random::<f64>() * 2000.0;
                Poi {
                    name: format!("poi-{i:03}"),
                    category: PoiCategory::Life,
                    position: frame.to_lonlat(x, y),
                    district: None,
                    address: None,
                }
            })
            .collect();
        let idx = PoiIndex::build(pois.clone(), 250.0);
        for _ in 0..50 {
            let cx = rng.random::<f64>() * 2400.0 - 200.0;
            let cy = rng.random::<f64>() * 2400.0 - 200.0;
            let c = frame.to_lonlat(cx, cy);
            let r = rng.random::<f64>() * 600.0;
            let got = idx.within_radius(c, r);
            let want: Vec<usize> = (0..pois.len())
                .filter(|&i| haversine_m(c, pois[i].position) <= r)
                .collect();
            assert_eq!(got, want);
        }
    }
}
