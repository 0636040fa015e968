//! GeoJSON feature collections to table rows.

use serde_json::{Map, Value};

use super::{FeatureRow, SkippedFeature, StoreError};
use crate::geometry::{Coord, EntityKey, Geometry, Polygon};
use crate::text::{collapse_ws, singularize};

/// Parses a FeatureCollection into rows of `(database, table)`. Features with
/// missing or unusable geometry are reported as skipped.
pub(crate) fn parse_collection(
    database: &str,
    table: &str,
    doc: &Value,
) -> Result<(Vec<FeatureRow>, Vec<SkippedFeature>), StoreError> {
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(StoreError::NotFeatureCollection);
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or(StoreError::NotFeatureCollection)?;
    let default_type = singularize(table);
    let mut rows: Vec<FeatureRow> = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (index, feature) in features.iter().enumerate() {
        let skip = |reason: String| SkippedFeature { index, reason };
        let empty = Map::new();
        let props = feature.get("properties").and_then(Value::as_object).unwrap_or(&empty);
        let geometry = match feature.get("geometry") {
            None | Some(Value::Null) => {
                skipped.push(skip("missing geometry".into()));
                continue;
            }
            Some(g) => match geometry_from_geojson(g) {
                Ok(g) => g,
                Err(reason) => {
                    skipped.push(skip(reason));
                    continue;
                }
            },
        };
        let name = props.get("name").and_then(Value::as_str).map(collapse_ws).unwrap_or_default();
        let category = ["fclass", "category"]
            .iter()
            .find_map(|k| props.get(*k).and_then(Value::as_str))
            .map(|c| collapse_ws(&c.replace('_', " ")))
            .filter(|c| !c.is_empty());
        let id = feature
            .get("id")
            .or_else(|| props.get("osm_id"))
            .or_else(|| props.get("id"))
            .and_then(|v| match v {
                Value::String(s) => Some(s.trim().replace('_', "-")),
                Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .filter(|s| !s.is_empty())
            .unwrap_or_else(|| (index + 1).to_string());
        let type_name = category.clone().unwrap_or_else(|| default_type.clone());
        let key = match EntityKey::new(database, &type_name, &name, &id) {
            Ok(k) => k,
            Err(e) => {
                skipped.push(skip(e.to_string()));
                continue;
            }
        };
        if !seen.insert(key.clone()) {
            skipped.push(skip(format!("duplicate key {key}")));
            continue;
        }
        rows.push(FeatureRow { key, geometry, category, name, properties: props.clone() });
    }
    Ok((rows, skipped))
}

fn coord(v: &Value) -> Result<Coord<f64>, String> {
    let a = v.as_array().ok_or("coordinate is not an array")?;
    if a.len() != 2 {
        return Err(format!("expected 2 coordinate values, got {}", a.len()));
    }
    let lon = a[0].as_f64().ok_or("coordinate is not a number")?;
    let lat = a[1].as_f64().ok_or("coordinate is not a number")?;
    Ok(Coord::new(lon, lat))
}

fn coords(v: &Value) -> Result<Vec<Coord<f64>>, String> {
    v.as_array().ok_or("coordinates are not an array")?.iter().map(coord).collect()
}

fn ring(v: &Value) -> Result<Vec<Coord<f64>>, String> {
    let r = coords(v)?;
    if r.len() < 4 || r.first() != r.last() {
        return Err("polygon ring is not closed".into());
    }
    Ok(r)
}

fn polygon(v: &Value) -> Result<Polygon<f64>, String> {
    let rings = v.as_array().ok_or("polygon is not an array")?;
    let (first, rest) = rings.split_first().ok_or("polygon without rings")?;
    Ok(Polygon::new(ring(first)?, rest.iter().map(ring).collect::<Result<_, _>>()?))
}

pub(crate) fn geometry_from_geojson(g: &Value) -> Result<Geometry<f64>, String> {
    let kind = g.get("type").and_then(Value::as_str).ok_or("geometry without type")?;
    let c = g.get("coordinates").ok_or("geometry without coordinates")?;
    let geom = match kind {
        "Point" => Geometry::Point(coord(c)?),
        "LineString" => {
            let cs = coords(c)?;
            if cs.len() < 2 {
                return Err("linestring needs at least two vertices".into());
            }
            Geometry::LineString(cs)
        }
        "Polygon" => Geometry::Polygon(polygon(c)?),
        "MultiPolygon" => {
            let ps = c.as_array().ok_or("multipolygon is not an array")?;
            if ps.is_empty() {
                return Err("empty multipolygon".into());
            }
            Geometry::MultiPolygon(ps.iter().map(polygon).collect::<Result<_, _>>()?)
        }
        other => return Err(format!("unsupported geometry type {other}")),
    };
    geom.validate().map_err(|e| e.to_string())?;
    Ok(geom)
}
