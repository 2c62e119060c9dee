//! Spherical distances and planar predicates on lat/lon coordinates.
//!
//! Containment treats longitude as x and latitude as y; rings must not cross
//! the antimeridian. Point-to-segment distances use a local equirectangular
//! projection centred on the query point, which is accurate at the
//! few-kilometre scale used for relevancy scoring.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Tolerance, in degrees, for treating a point as lying on a ring edge.
const BOUNDARY_EPS_DEG: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    pub fn in_bounds(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

fn wrap_lon(d: f64) -> f64 {
    let mut d = d % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d < -180.0 {
        d += 360.0;
    }
    d
}

/// Kilometre offsets (east, north) of `q` relative to `origin`.
pub fn local_offset_km(origin: LatLon, q: LatLon) -> (f64, f64) {
    let k = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    let x = wrap_lon(q.lon - origin.lon) * k * origin.lat.to_radians().cos();
    let y = (q.lat - origin.lat) * k;
    (x, y)
}

/// Distance from `p` to segment `ab`, with the segment direction (east, north).
pub fn distance_to_segment_km(p: LatLon, a: LatLon, b: LatLon) -> (f64, (f64, f64)) {
    let (ax, ay) = local_offset_km(p, a);
    let (bx, by) = local_offset_km(p, b);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (-(ax * dx + ay * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((cx * cx + cy * cy).sqrt(), (dx, dy))
}

/// Distance to the nearest edge of a polyline and that edge's direction.
pub fn distance_to_polyline_km(p: LatLon, line: &[LatLon]) -> (f64, (f64, f64)) {
    if line.len() == 1 {
        return (haversine_km(p, line[0]), (0.0, 0.0));
    }
    line.windows(2)
        .map(|w| distance_to_segment_km(p, w[0], w[1]))
        .fold((f64::INFINITY, (0.0, 0.0)), |best, cur| {
            if cur.0 < best.0 {
                cur
            } else {
                best
            }
        })
}

fn on_segment(p: LatLon, a: LatLon, b: LatLon) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    let scale = (b.lon - a.lon).abs().max((b.lat - a.lat).abs()).max(1.0);
    if cross.abs() > BOUNDARY_EPS_DEG * scale {
        return false;
    }
    p.lon >= a.lon.min(b.lon) - BOUNDARY_EPS_DEG
        && p.lon <= a.lon.max(b.lon) + BOUNDARY_EPS_DEG
        && p.lat >= a.lat.min(b.lat) - BOUNDARY_EPS_DEG
        && p.lat <= a.lat.max(b.lat) + BOUNDARY_EPS_DEG
}

/// Ray-casting parity test against a closed ring. Points on an edge count
/// as inside.
pub fn point_in_ring(p: LatLon, ring: &[LatLon]) -> bool {
    if ring.windows(2).any(|w| on_segment(p, w[0], w[1])) {
        return true;
    }
    let mut inside = false;
    for w in ring.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat);
            if p.lon < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// True when `p` lies inside the exterior ring and outside every hole
/// (hole boundaries belong to the polygon).
pub fn point_in_polygon(p: LatLon, exterior: &[LatLon], holes: &[Vec<LatLon>]) -> bool {
    point_in_ring(p, exterior)
        && !holes
            .iter()
            .any(|h| point_in_ring(p, h) && !h.windows(2).any(|w| on_segment(p, w[0], w[1])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring(coords: &[(f64, f64)]) -> Vec<LatLon> {
        coords
            .iter()
            .map(|&(lon, lat)| LatLon::new(lat, lon))
            .collect()
    }

    fn unit_square() -> Vec<LatLon> {
        ring(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)])
    }

    /// Winding number (Sunday's crossing rule), independent of the parity test.
    fn winding_number(p: LatLon, ring: &[LatLon]) -> i32 {
        let is_left = |a: LatLon, b: LatLon| {
            (b.lon - a.lon) * (p.lat - a.lat) - (p.lon - a.lon) * (b.lat - a.lat)
        };
        let mut wn = 0;
        for w in ring.windows(2) {
            if w[0].lat <= p.lat {
                if w[1].lat > p.lat && is_left(w[0], w[1]) > 0.0 {
                    wn += 1;
                }
            } else if w[1].lat <= p.lat && is_left(w[0], w[1]) < 0.0 {
                wn -= 1;
            }
        }
        wn
    }

    #[test]
    fn haversine_reference_values() {
        let a = LatLon::new(10.0, 20.0);
        assert_eq!(haversine_km(a, a), 0.0);
        let d = haversine_km(LatLon::new(0.0, 0.0), LatLon::new(0.0, 1.0));
        // R * pi / 180
        assert!((d - 111.19).abs() <= 0.01, "{d}");
    }

    #[test]
    fn unit_square_containment() {
        let sq = unit_square();
        assert!(point_in_ring(LatLon::new(0.5, 0.5), &sq));
        assert!(!point_in_ring(LatLon::new(2.0, 2.0), &sq));
        // boundary and vertex are inside
        assert!(point_in_ring(LatLon::new(0.0, 0.5), &sq));
        assert!(point_in_ring(LatLon::new(1.0, 1.0), &sq));
    }

    #[test]
    fn holes_exclude_interior_only() {
        let sq = ring(&[(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (0.0, 0.0)]);
        let hole = ring(&[(1.0, 1.0), (2.0, 1.0), (2.0, 2.0), (1.0, 2.0), (1.0, 1.0)]);
        let holes = vec![hole];
        assert!(!point_in_polygon(LatLon::new(1.5, 1.5), &sq, &holes));
        assert!(point_in_polygon(LatLon::new(1.0, 1.5), &sq, &holes));
        assert!(point_in_polygon(LatLon::new(3.0, 3.0), &sq, &holes));
    }

    #[test]
    fn concave_octagon_matches_winding_oracle() {
        // an arrow-like concave 8-vertex polygon
        let poly = ring(&[
            (0.0, 0.0),
            (4.0, 0.0),
            (4.0, 3.0),
            (2.5, 1.5),
            (2.0, 4.0),
            (1.5, 1.5),
            (0.0, 3.0),
            (0.5, 1.0),
            (0.0, 0.0),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let p = LatLon::new(rng.random_range(-1.0..5.0), rng.random_range(-1.0..5.0));
            assert_eq!(
                point_in_ring(p, &poly),
                winding_number(p, &poly) != 0,
                "{p:?}"
            );
        }
    }

    #[test]
    fn segment_distance_and_direction() {
        let a = LatLon::new(0.0, 0.0);
        let b = LatLon::new(0.0, 1.0);
        let (d, dir) = distance_to_segment_km(LatLon::new(0.0, 0.5), a, b);
        assert!(d < 1e-9);
        assert!(dir.0 > 0.0 && dir.1.abs() < 1e-12);
        let (d, _) = distance_to_segment_km(LatLon::new(0.01, 0.5), a, b);
        assert!((d - 1.1119).abs() < 1e-3, "{d}");
    }

    #[test]
    fn antimeridian_offsets_wrap() {
        let (x, _) = local_offset_km(LatLon::new(0.0, 179.9), LatLon::new(0.0, -179.9));
        assert!((x - 22.238).abs() < 0.01, "{x}");
    }

    proptest! {
        #[test]
        fn haversine_symmetric_nonnegative(
            la in -90.0f64..90.0, lo in -180.0f64..180.0, lb in -90.0f64..90.0, lob in -180.0f64..180.0,
        ) {
            let a = LatLon::new(la, lo);
            let b = LatLon::new(lb, lob);
            let d = haversine_km(a, b);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d, haversine_km(b, a));
        }
    }
}
