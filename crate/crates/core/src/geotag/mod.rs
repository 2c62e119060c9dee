//! Environment tagging of GPS fixes from labelled map geometry.
//!
//! For each fix every nearby map item gets a relevancy score
//! (label weight × proximity kernel × heading factor) and the fix takes the
//! tag of the highest-scoring item. Fixes with nothing within the search
//! radius fall back to `ocean` when far from any land polygon and `nature`
//! otherwise.

pub mod geofile;
pub mod geometry;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::telemetry::{EnvironmentTag, Leg, Measurement, Shipment};
pub use geofile::{parse_geofile, parse_geojson, to_geojson, ParsedGeofile};
pub use geometry::{haversine_km, point_in_polygon, point_in_ring, LatLon};

/// Controlled label vocabulary for map items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Ocean,
    Water,
    Port,
    Railway,
    Road,
    Industrial,
    Residential,
    Commercial,
    Park,
    Farmland,
    Forest,
    Other,
}

impl Label {
    pub const ALL: [Label; 12] = [
        Label::Ocean,
        Label::Water,
        Label::Port,
        Label::Railway,
        Label::Road,
        Label::Industrial,
        Label::Residential,
        Label::Commercial,
        Label::Park,
        Label::Farmland,
        Label::Forest,
        Label::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Ocean => "ocean",
            Label::Water => "water",
            Label::Port => "port",
            Label::Railway => "railway",
            Label::Road => "road",
            Label::Industrial => "industrial",
            Label::Residential => "residential",
            Label::Commercial => "commercial",
            Label::Park => "park",
            Label::Farmland => "farmland",
            Label::Forest => "forest",
            Label::Other => "other",
        }
    }

    pub fn tag(self) -> EnvironmentTag {
        match self {
            Label::Ocean => EnvironmentTag::Ocean,
            Label::Water => EnvironmentTag::WaterBodies,
            Label::Port => EnvironmentTag::Port,
            Label::Railway => EnvironmentTag::Railways,
            Label::Road => EnvironmentTag::Roads,
            Label::Industrial | Label::Residential | Label::Commercial => EnvironmentTag::Urban,
            Label::Park | Label::Farmland | Label::Forest | Label::Other => EnvironmentTag::Nature,
        }
    }

    pub fn default_weight(self) -> f64 {
        match self {
            Label::Ocean => 1.0,
            Label::Water | Label::Port => 0.9,
            Label::Railway | Label::Road => 0.8,
            Label::Industrial | Label::Residential | Label::Commercial => 0.7,
            Label::Park | Label::Farmland | Label::Forest => 0.6,
            Label::Other => 0.3,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    Polygon {
        exterior: Vec<LatLon>,
        holes: Vec<Vec<LatLon>>,
    },
    LineString(Vec<LatLon>),
    Point(LatLon),
}

/// Bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BBox {
    fn of(points: &[LatLon]) -> Self {
        points.iter().fold(
            BBox {
                min_lat: f64::INFINITY,
                max_lat: f64::NEG_INFINITY,
                min_lon: f64::INFINITY,
                max_lon: f64::NEG_INFINITY,
            },
            |b, p| BBox {
                min_lat: b.min_lat.min(p.lat),
                max_lat: b.max_lat.max(p.lat),
                min_lon: b.min_lon.min(p.lon),
                max_lon: b.max_lon.max(p.lon),
            },
        )
    }

    /// Conservative test: false only if `p` is certainly farther than `km`.
    fn near(&self, p: LatLon, km: f64) -> bool {
        let dlat = km / 111.0 + 1e-9;
        let coslat = p.lat.to_radians().cos().max(0.01);
        let dlon = km / (111.0 * coslat) + 1e-9;
        let lon_ok = (p.lon >= self.min_lon - dlon && p.lon <= self.max_lon + dlon)
            || self.max_lon - self.min_lon > 180.0
            || p.lon + 360.0 <= self.max_lon + dlon
            || p.lon - 360.0 >= self.min_lon - dlon;
        p.lat >= self.min_lat - dlat && p.lat <= self.max_lat + dlat && lon_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapItem {
    pub geometry: Geometry,
    pub label: Label,
    pub bbox: BBox,
}

impl MapItem {
    pub fn new(geometry: Geometry, label: Label) -> Self {
        let bbox = match &geometry {
            Geometry::Polygon { exterior, .. } => BBox::of(exterior),
            Geometry::LineString(l) => BBox::of(l),
            Geometry::Point(p) => BBox::of(std::slice::from_ref(p)),
        };
        MapItem {
            geometry,
            label,
            bbox,
        }
    }

    pub fn polygon(exterior: Vec<LatLon>, label: Label) -> Self {
        MapItem::new(
            Geometry::Polygon {
                exterior,
                holes: Vec::new(),
            },
            label,
        )
    }

    pub fn contains(&self, p: LatLon) -> bool {
        match &self.geometry {
            Geometry::Polygon { exterior, holes } => point_in_polygon(p, exterior, holes),
            _ => false,
        }
    }

    /// Distance in km (0 inside a polygon) and, for lines, the direction of
    /// the nearest edge.
    pub fn distance_km(&self, p: LatLon) -> (f64, Option<(f64, f64)>) {
        match &self.geometry {
            Geometry::Point(q) => (haversine_km(p, *q), None),
            Geometry::LineString(l) => {
                let (d, dir) = geometry::distance_to_polyline_km(p, l);
                (d, Some(dir))
            }
            Geometry::Polygon { exterior, holes } => {
                if point_in_polygon(p, exterior, holes) {
                    return (0.0, None);
                }
                let d = std::iter::once(exterior)
                    .chain(holes.iter())
                    .map(|r| geometry::distance_to_polyline_km(p, r).0)
                    .fold(f64::INFINITY, f64::min);
                (d, None)
            }
        }
    }

    /// Land polygons anchor the far-from-anything fallback.
    fn is_land_polygon(&self) -> bool {
        matches!(self.geometry, Geometry::Polygon { .. })
            && !matches!(self.label, Label::Ocean | Label::Water)
    }
}

/// Tunable constants of the relevancy score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    /// Proximity kernel length scale (km).
    pub lambda_km: f64,
    /// Items farther than this score zero (km).
    pub radius_km: f64,
    /// Fallback distance to the nearest land polygon (km).
    pub fallback_km: f64,
    /// Floor of the line heading factor.
    pub min_heading_factor: f64,
    pub weights: BTreeMap<Label, f64>,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            lambda_km: 0.5,
            radius_km: 5.0,
            fallback_km: 10.0,
            min_heading_factor: 0.25,
            weights: Label::ALL
                .iter()
                .map(|&l| (l, l.default_weight()))
                .collect(),
        }
    }
}

impl ScoringConfig {
    pub fn weight(&self, label: Label) -> f64 {
        self.weights
            .get(&label)
            .copied()
            .unwrap_or_else(|| label.default_weight())
    }
}

/// Score of one map item for one fix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelevancyScore {
    pub item: usize,
    pub score: f64,
    pub distance_km: f64,
}

/// Velocity in m/s, (east, north).
pub type Velocity = (f64, f64);

fn heading_factor(v: Velocity, dir: (f64, f64), floor: f64) -> f64 {
    let vn = v.0.hypot(v.1);
    let dn = dir.0.hypot(dir.1);
    if vn == 0.0 || dn == 0.0 {
        return 1.0;
    }
    let cos = (v.0 * dir.0 + v.1 * dir.1) / (vn * dn);
    cos.abs().max(floor)
}

/// Relevancy of `item` to a fix at `p` moving with velocity `v`.
pub fn relevancy(item: &MapItem, p: LatLon, v: Velocity, cfg: &ScoringConfig) -> f64 {
    let (d, dir) = item.distance_km(p);
    if d > cfg.radius_km {
        return 0.0;
    }
    let proximity = if d == 0.0 && item.contains(p) {
        1.0
    } else {
        (-d / cfg.lambda_km).exp()
    };
    let heading = match dir {
        Some(dir) => heading_factor(v, dir, cfg.min_heading_factor),
        None => 1.0,
    };
    cfg.weight(item.label) * proximity * heading
}

fn beats(a: (f64, EnvironmentTag), b: (f64, EnvironmentTag)) -> bool {
    let tol = 1e-12 * a.0.abs().max(b.0.abs());
    if (a.0 - b.0).abs() <= tol {
        a.1.priority() < b.1.priority()
    } else {
        a.0 > b.0
    }
}

/// Tags a fix with the environment of its most relevant item.
pub fn tag_point(p: LatLon, v: Velocity, items: &[MapItem], cfg: &ScoringConfig) -> EnvironmentTag {
    let refs: Vec<&MapItem> = items.iter().collect();
    tag_among(p, v, &refs, cfg)
}

fn tag_among(p: LatLon, v: Velocity, items: &[&MapItem], cfg: &ScoringConfig) -> EnvironmentTag {
    let mut best: Option<(f64, EnvironmentTag)> = None;
    for item in items {
        if !item.bbox.near(p, cfg.radius_km) {
            continue;
        }
        let (d, _) = item.distance_km(p);
        if d > cfg.radius_km {
            continue;
        }
        let cand = (relevancy(item, p, v, cfg), item.label.tag());
        if best.is_none_or(|b| beats(cand, b)) {
            best = Some(cand);
        }
    }
    if let Some((_, tag)) = best {
        return tag;
    }
    let land_near = items
        .iter()
        .filter(|i| i.is_land_polygon())
        .any(|i| i.bbox.near(p, cfg.fallback_km) && i.distance_km(p).0 <= cfg.fallback_km);
    if land_near {
        EnvironmentTag::Nature
    } else {
        EnvironmentTag::Ocean
    }
}

/// Scores every item; convenience for inspection and tests.
pub fn score_items(
    p: LatLon,
    v: Velocity,
    items: &[MapItem],
    cfg: &ScoringConfig,
) -> Vec<RelevancyScore> {
    items
        .iter()
        .enumerate()
        .map(|(i, item)| RelevancyScore {
            item: i,
            score: relevancy(item, p, v, cfg),
            distance_km: item.distance_km(p).0,
        })
        .collect()
}

/// Finite-difference velocity of each fix in a leg: backward difference,
/// forward for the first fix.
pub fn leg_velocities(leg: &Leg) -> Vec<Velocity> {
    let ms = &leg.measurements;
    let diff = |a: &Measurement, b: &Measurement| -> Velocity {
        let dt = (b.timestamp - a.timestamp).num_seconds() as f64;
        if dt <= 0.0 {
            return (0.0, 0.0);
        }
        let (e, n) =
            geometry::local_offset_km(LatLon::new(a.lat, a.lon), LatLon::new(b.lat, b.lon));
        (e * 1000.0 / dt, n * 1000.0 / dt)
    };
    (0..ms.len())
        .map(|i| match i {
            0 if ms.len() > 1 => diff(&ms[0], &ms[1]),
            0 => (0.0, 0.0),
            _ => diff(&ms[i - 1], &ms[i]),
        })
        .collect()
}

/// Parsed map data plus scoring constants.
#[derive(Debug, Clone)]
pub struct Tagger {
    pub items: Vec<MapItem>,
    pub config: ScoringConfig,
}

impl Tagger {
    pub fn new(items: Vec<MapItem>, config: ScoringConfig) -> Self {
        Tagger { items, config }
    }

    pub fn tag(&self, p: LatLon, v: Velocity) -> EnvironmentTag {
        tag_point(p, v, &self.items, &self.config)
    }

    /// Returns copies of the shipments with every measurement tagged and
    /// segments derived.
    pub fn tag_shipments(&self, shipments: &[Shipment]) -> Vec<Shipment> {
        shipments
            .par_iter()
            .map(|s| {
                let legs = s
                    .legs
                    .iter()
                    .map(|leg| {
                        let mut leg = leg.clone();
                        let vel = leg_velocities(&leg);
                        for (m, v) in leg.measurements.iter_mut().zip(vel) {
                            m.environment = Some(self.tag(LatLon::new(m.lat, m.lon), v));
                        }
                        leg
                    })
                    .collect();
                Shipment::new(s.shipment_id.clone(), legs)
            })
            .collect()
    }
}
