//! Reader and writer for the GeoJSON subset used as map input.
//!
//! Accepted: a `FeatureCollection` whose features carry `Polygon`,
//! `MultiPolygon`, `LineString` or `Point` geometries and a string `label`
//! property. Coordinates are `[lon, lat]`. Multipolygons are split into one
//! item per polygon; every other feature yields exactly one item.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::geometry::LatLon;
use super::{Geometry, Label, MapItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedGeofile {
    pub items: Vec<MapItem>,
    /// Features whose label is outside the vocabulary (mapped to `other`).
    pub unknown_labels: usize,
}

pub fn parse_geofile(path: impl AsRef<Path>) -> Result<ParsedGeofile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_geojson(&text)
}

pub fn parse_geojson(text: &str) -> Result<ParsedGeofile> {
    let root: Value = serde_json::from_str(text)?;
    if root.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(Error::Geofile(
            "top level must be a FeatureCollection".into(),
        ));
    }
    let features = root
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::Geofile("missing `features` array".into()))?;

    let mut out = ParsedGeofile::default();
    for (index, feature) in features.iter().enumerate() {
        let bad = |reason: String| Error::Geometry { index, reason };
        let label_text = feature
            .pointer("/properties/label")
            .and_then(Value::as_str)
            .unwrap_or("");
        let label = match label_text.parse::<Label>() {
            Ok(l) => l,
            Err(_) => {
                out.unknown_labels += 1;
                log::warn!("feature {index}: unknown label `{label_text}`, using `other`");
                Label::Other
            }
        };
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| bad("missing geometry".into()))?;
        let kind = geometry
            .get("type")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing geometry type".into()))?;
        let coords = geometry
            .get("coordinates")
            .ok_or_else(|| bad("missing coordinates".into()))?;

        match kind {
            "Point" => {
                let p = position(coords).map_err(bad)?;
                out.items.push(MapItem::new(Geometry::Point(p), label));
            }
            "LineString" => {
                let line = positions(coords).map_err(bad)?;
                if line.len() < 2 {
                    return Err(bad(format!(
                        "linestring has {} vertices, need 2",
                        line.len()
                    )));
                }
                out.items
                    .push(MapItem::new(Geometry::LineString(line), label));
            }
            "Polygon" => {
                let g = polygon(coords).map_err(bad)?;
                out.items.push(MapItem::new(g, label));
            }
            "MultiPolygon" => {
                let parts = coords
                    .as_array()
                    .ok_or_else(|| bad("multipolygon coordinates must be an array".into()))?;
                for part in parts {
                    let g = polygon(part).map_err(bad)?;
                    out.items.push(MapItem::new(g, label));
                }
            }
            other => return Err(bad(format!("unsupported geometry type `{other}`"))),
        }
    }
    Ok(out)
}

fn position(v: &Value) -> std::result::Result<LatLon, String> {
    let arr = v.as_array().ok_or("position must be an array")?;
    let num = |i: usize| arr.get(i).and_then(Value::as_f64);
    match (num(0), num(1)) {
        (Some(lon), Some(lat)) => {
            let p = LatLon::new(lat, lon);
            if p.in_bounds() {
                Ok(p)
            } else {
                Err(format!("position [{lon}, {lat}] out of bounds"))
            }
        }
        _ => Err("position needs numeric lon and lat".into()),
    }
}

fn positions(v: &Value) -> std::result::Result<Vec<LatLon>, String> {
    v.as_array()
        .ok_or("coordinates must be an array")?
        .iter()
        .map(position)
        .collect()
}

fn ring(v: &Value) -> std::result::Result<Vec<LatLon>, String> {
    let r = positions(v)?;
    if r.len() < 4 {
        return Err(format!("ring has {} vertices, need at least 4", r.len()));
    }
    if r.first() != r.last() {
        return Err("open ring: first vertex differs from last".into());
    }
    Ok(r)
}

fn polygon(v: &Value) -> std::result::Result<Geometry, String> {
    let rings = v.as_array().ok_or("polygon coordinates must be an array")?;
    let mut rings = rings.iter().map(ring);
    let exterior = rings.next().ok_or("polygon has no rings")??;
    let holes = rings.collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(Geometry::Polygon { exterior, holes })
}

fn coords_of(points: &[LatLon]) -> Vec<Value> {
    points.iter().map(|p| json!([p.lon, p.lat])).collect()
}

/// Serializes items back into the accepted GeoJSON subset.
pub fn to_geojson(items: &[MapItem]) -> String {
    let features: Vec<Value> = items
        .iter()
        .map(|item| {
            let geometry = match &item.geometry {
                Geometry::Point(p) => json!({"type": "Point", "coordinates": [p.lon, p.lat]}),
                Geometry::LineString(l) => {
                    json!({"type": "LineString", "coordinates": coords_of(l)})
                }
                Geometry::Polygon { exterior, holes } => {
                    let mut rings = vec![Value::Array(coords_of(exterior))];
                    rings.extend(holes.iter().map(|h| Value::Array(coords_of(h))));
                    json!({"type": "Polygon", "coordinates": rings})
                }
            };
            json!({
                "type": "Feature",
                "properties": {"label": item.label.as_str()},
                "geometry": geometry,
            })
        })
        .collect();
    serde_json::to_string_pretty(&json!({"type": "FeatureCollection", "features": features}))
        .expect("geojson serializes")
}
