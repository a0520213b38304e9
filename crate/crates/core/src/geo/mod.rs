//! Geodesic distance, polygon measures, and point containment.
//!
//! City-scale fences are metres across, so areas and containment are computed
//! on a local equirectangular projection; spherical excess is negligible at
//! this scale. The spatial grid index lives in [`grid`].

pub mod grid;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use grid::{FenceIndex, GridIndex, PoiIndex};

/// Mean earth radius in metres (IUGG R1).
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Metres per degree of latitude on the sphere.
pub const M_PER_DEG_LAT: f64 = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;

/// A WGS-ish (longitude, latitude) position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LonLat {
    pub lon: f64,
    pub lat: f64,
}

impl LonLat {
    pub fn new(lon: f64, lat: f64) -> Self {
        LonLat { lon, lat }
    }

    /// True when both coordinates are finite and within valid ranges.
    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Great-circle distance in metres between two positions.
pub fn haversine_m(a: LonLat, b: LonLat) -> f64 {
    let lat_a = a.lat.to_radians();
    let lat_b = b.lat.to_radians();
    let dlat = (b.lat - a.lat).to_radians() / 2.0;
    let dlon = (b.lon - a.lon).to_radians() / 2.0;
    let h = dlat.sin().powi(2) + lat_a.cos() * lat_b.cos() * dlon.sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Equirectangular projection centred on a reference point. `x` grows east,
/// `y` grows north, both in metres.
#[derive(Debug, Clone, Copy)]
pub struct LocalFrame {
    origin: LonLat,
    m_per_deg_lon: f64,
}

impl LocalFrame {
    pub fn centered_at(origin: LonLat) -> Self {
        LocalFrame {
            origin,
            m_per_deg_lon: M_PER_DEG_LAT * origin.lat.to_radians().cos(),
        }
    }

    pub fn to_xy(&self, p: LonLat) -> (f64, f64) {
        (
            (p.lon - self.origin.lon) * self.m_per_deg_lon,
            (p.lat - self.origin.lat) * M_PER_DEG_LAT,
        )
    }

    pub fn to_lonlat(&self, x: f64, y: f64) -> LonLat {
        LonLat {
            lon: self.origin.lon + x / self.m_per_deg_lon,
            lat: self.origin.lat + y / M_PER_DEG_LAT,
        }
    }
}

/// Drops the closing vertex when the ring repeats its first point.
fn open_ring(ring: &[LonLat]) -> &[LonLat] {
    if ring.len() >= 2 && ring.first() == ring.last() {
        &ring[..ring.len() - 1]
    } else {
        ring
    }
}

fn count_distinct(verts: &[LonLat]) -> usize {
    let mut seen: Vec<(u64, u64)> = verts
        .iter()
        .map(|v| (v.lon.to_bits(), v.lat.to_bits()))
        .collect();
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

fn vertex_mean(verts: &[LonLat]) -> LonLat {
    let n = verts.len() as f64;
    LonLat {
        lon: verts.iter().map(|v| v.lon).sum::<f64>() / n,
        lat: verts.iter().map(|v| v.lat).sum::<f64>() / n,
    }
}

/// Planar shoelace area of a ring projected about its vertex mean, in m².
///
/// Accepts the ring with or without the closing vertex. Orientation does not
/// matter; the absolute value is returned.
pub fn polygon_area_m2(ring: &[LonLat]) -> Result<f64> {
    let verts = open_ring(ring);
    if count_distinct(verts) < 3 {
        return Err(Error::DegeneratePolygon(
            "fewer than 3 distinct vertices".into(),
        ));
    }
    let frame = LocalFrame::centered_at(vertex_mean(verts));
    let xy: Vec<(f64, f64)> = verts.iter().map(|v| frame.to_xy(*v)).collect();
    let mut twice_area = 0.0;
    for i in 0..xy.len() {
        let (x0, y0) = xy[i];
        let (x1, y1) = xy[(i + 1) % xy.len()];
        twice_area += x0 * y1 - x1 * y0;
    }
    let area = twice_area.abs() / 2.0;
    if area < 1e-9 {
        return Err(Error::DegeneratePolygon("collinear ring (zero area)".into()));
    }
    Ok(area)
}

/// Area-weighted centroid of a simple ring. Falls back to the vertex mean for
/// (near-)degenerate rings.
pub fn polygon_centroid(ring: &[LonLat]) -> LonLat {
    let verts = open_ring(ring);
    let mean = vertex_mean(verts);
    if verts.len() < 3 {
        return mean;
    }
    let frame = LocalFrame::centered_at(mean);
    let xy: Vec<(f64, f64)> = verts.iter().map(|v| frame.to_xy(*v)).collect();
    let mut twice_area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..xy.len() {
        let (x0, y0) = xy[i];
        let (x1, y1) = xy[(i + 1) % xy.len()];
        let cross = x0 * y1 - x1 * y0;
        twice_area += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if twice_area.abs() < 1e-12 {
        return mean;
    }
    frame.to_lonlat(cx / (3.0 * twice_area), cy / (3.0 * twice_area))
}

/// Distance in degree space from `p` to the segment `a`-`b`.
fn segment_distance_deg(p: LonLat, a: LonLat, b: LonLat) -> f64 {
    let (px, py) = (p.lon, p.lat);
    let (ax, ay) = (a.lon, a.lat);
    let (bx, by) = (b.lon, b.lat);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 <= 0.0 {
        0.0
    } else {
        (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (ax + t * dx, ay + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

/// Even-odd containment test with boundary points counted as inside
/// (tolerance 1e-12 degrees).
pub fn point_in_polygon(p: LonLat, ring: &[LonLat]) -> bool {
    let verts = open_ring(ring);
    if verts.len() < 3 {
        return false;
    }
    for i in 0..verts.len() {
        let a = verts[i];
        let b = verts[(i + 1) % verts.len()];
        if segment_distance_deg(p, a, b) <= 1e-12 {
            return true;
        }
    }
    let mut inside = false;
    let mut j = verts.len() - 1;
    for i in 0..verts.len() {
        let vi = verts[i];
        let vj = verts[j];
        if (vi.lat > p.lat) != (vj.lat > p.lat) {
            let x_cross = (vj.lon - vi.lon) * (p.lat - vi.lat) / (vj.lat - vi.lat) + vi.lon;
            if p.lon < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Axis-aligned bounding box in degree space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl BBox {
    pub fn of_point(p: LonLat) -> Self {
        BBox {
            min_lon: p.lon,
            min_lat: p.lat,
            max_lon: p.lon,
            max_lat: p.lat,
        }
    }

    pub fn of_ring(ring: &[LonLat]) -> Option<Self> {
        let mut it = ring.iter();
        let first = it.next()?;
        let mut bb = BBox::of_point(*first);
        for p in it {
            bb.expand(*p);
        }
        Some(bb)
    }

    pub fn expand(&mut self, p: LonLat) {
        self.min_lon = self.min_lon.min(p.lon);
        self.min_lat = self.min_lat.min(p.lat);
        self.max_lon = self.max_lon.max(p.lon);
        self.max_lat = self.max_lat.max(p.lat);
    }

    pub fn center(&self) -> LonLat {
        LonLat {
            lon: (self.min_lon + self.max_lon) / 2.0,
            lat: (self.min_lat + self.max_lat) / 2.0,
        }
    }

    pub fn contains(&self, p: LonLat) -> bool {
        p.lon >= self.min_lon && p.lon <= self.max_lon && p.lat >= self.min_lat && p.lat <= self.max_lat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_ring_m(origin: LonLat, side_m: f64) -> Vec<LonLat> {
        let frame = LocalFrame::centered_at(origin);
        vec![
            frame.to_lonlat(0.0, 0.0),
            frame.to_lonlat(side_m, 0.0),
            frame.to_lonlat(side_m, side_m),
            frame.to_lonlat(0.0, side_m),
            frame.to_lonlat(0.0, 0.0),
        ]
    }

    #[test]
    fn haversine_identity_is_zero() {
        let p = LonLat::new(118.140385, 24.521156);
        assert_eq!(haversine_m(p, p), 0.0);
    }

    #[test]
    fn haversine_is_symmetric() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let a = LonLat::new(
                rng.random::<f64>() * 360.0 - 180.0,
                rng.random::<f64>() * 180.0 - 90.0,
            );
            let b = LonLat::new(
                rng.random::<f64>() * 360.0 - 180.0,
                rng.random::<f64>() * 180.0 - 90.0,
            );
            assert_eq!(haversine_m(a, b), haversine_m(b, a));
            assert!(haversine_m(a, b) >= 0.0);
        }
    }

    #[test]
    fn haversine_hundredth_degree_lon_at_24_5n() {
        // Independent geodesic calculation: 0.01 deg of longitude at 24.5 N
        // spans roughly 1,013 m on the sphere.
        let d = haversine_m(LonLat::new(118.0, 24.5), LonLat::new(118.01, 24.5));
        assert!((d - 1013.0).abs() < 1013.0 * 0.01, "got {d}");
    }

    #[test]
    fn area_of_constructed_10m_square() {
        let ring = square_ring_m(LonLat::new(118.1, 24.5), 10.0);
        let area = polygon_area_m2(&ring).unwrap();
        assert!((area - 100.0).abs() < 0.1, "got {area}");
    }

    #[test]
    fn area_ignores_orientation() {
        let ring = square_ring_m(LonLat::new(118.1, 24.5), 7.5);
        let mut rev = ring.clone();
        rev.reverse();
        let a = polygon_area_m2(&ring).unwrap();
        let b = polygon_area_m2(&rev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn area_rejects_collinear_ring() {
        let ring = vec![
            LonLat::new(118.0, 24.5),
            LonLat::new(118.0001, 24.5),
            LonLat::new(118.0002, 24.5),
            LonLat::new(118.0, 24.5),
        ];
        assert!(matches!(
            polygon_area_m2(&ring),
            Err(Error::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn area_rejects_repeated_point() {
        let p = LonLat::new(118.0, 24.5);
        assert!(matches!(
            polygon_area_m2(&[p, p, p]),
            Err(Error::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn area_matches_triangulation() {
        // Irregular pentagon; shoelace area must equal the sum of the fan
        // triangulation's triangle areas.
        let frame = LocalFrame::centered_at(LonLat::new(118.1, 24.5));
        let pts_m = [(0.0, 0.0), (12.0, -2.0), (15.0, 9.0), (6.0, 14.0), (-3.0, 7.0)];
        let ring: Vec<LonLat> = pts_m.iter().map(|&(x, y)| frame.to_lonlat(x, y)).collect();
        let total = polygon_area_m2(&ring).unwrap();
        let mut fan = 0.0;
        for i in 1..pts_m.len() - 1 {
            let tri = vec![ring[0], ring[i], ring[i + 1], ring[0]];
            fan += polygon_area_m2(&tri).unwrap();
        }
        assert!((total - fan).abs() <= total * 0.001, "{total} vs {fan}");
    }

    #[test]
    fn centroid_of_square_is_center() {
        let ring = square_ring_m(LonLat::new(118.1, 24.5), 10.0);
        let c = polygon_centroid(&ring);
        let bb = BBox::of_ring(&ring).unwrap();
        assert!(bb.contains(c));
        let expected = LocalFrame::centered_at(LonLat::new(118.1, 24.5)).to_lonlat(5.0, 5.0);
        assert!(haversine_m(c, expected) < 0.01);
    }

    #[test]
    fn containment_center_and_far_point() {
        let ring = square_ring_m(LonLat::new(118.1, 24.5), 10.0);
        let frame = LocalFrame::centered_at(LonLat::new(118.1, 24.5));
        assert!(point_in_polygon(frame.to_lonlat(5.0, 5.0), &ring));
        assert!(!point_in_polygon(frame.to_lonlat(20.0, 5.0), &ring));
    }

    #[test]
    fn containment_includes_boundary() {
        let ring = square_ring_m(LonLat::new(118.1, 24.5), 10.0);
        // A ring vertex and an edge point are both "inside".
        assert!(point_in_polygon(ring[0], &ring));
        let edge_mid = LonLat::new((ring[0].lon + ring[1].lon) / 2.0, ring[0].lat);
        assert!(point_in_polygon(edge_mid, &ring));
    }

    #[test]
    fn containment_matches_halfplane_oracle_on_convex_ring() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        // Convex hexagon, counterclockwise, in a 100 m frame.
        let frame = LocalFrame::centered_at(LonLat::new(118.1, 24.5));
        let hex_m = [
            (50.0, 0.0),
            (100.0, 30.0),
            (100.0, 70.0),
            (50.0, 100.0),
            (0.0, 70.0),
            (0.0, 30.0),
        ];
        let ring: Vec<LonLat> = hex_m.iter().map(|&(x, y)| frame.to_lonlat(x, y)).collect();

        // Half-plane oracle in the planar degree space the implementation
        // projects into: a convex CCW polygon contains p iff p is on the
        // left of (or on) every directed edge.
        let oracle = |p: LonLat| -> bool {
            (0..ring.len()).all(|i| {
                let a = ring[i];
                let b = ring[(i + 1) % ring.len()];
                let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
                cross >= -1e-18
            })
        };

        let mut inside_seen = 0;
        for _ in 0..1000 {
            let x = rng.random::<f64>() * 140.0 - 20.0;
            let y = rng.random::<f64>() * 140.0 - 20.0;
            let p = frame.to_lonlat(x, y);
            let got = point_in_polygon(p, &ring);
            let want = oracle(p);
            assert_eq!(got, want, "disagreement at ({x:.3}, {y:.3}) m");
            if got {
                inside_seen += 1;
            }
        }
        assert!(inside_seen > 100, "test should exercise interior points");
    }
}
