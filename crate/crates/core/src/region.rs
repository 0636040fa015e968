//! Region text to bounding box: geocoding plus agent-directed cuts and scaling.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{extract_json, AgentError, AgentRole, Ask, AskError, Gateway};
use crate::text::collapse_ws;
use crate::BoundingBox;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("place `{0}` not found")]
    PlaceNotFound(String),
    #[error("geocoder unavailable: {0}")]
    GeocoderUnavailable(String),
    #[error("bounding box has zero extent after modification")]
    DegenerateBox,
    #[error("malformed directive: {0}")]
    MalformedDirective(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<AskError<RegionError>> for RegionError {
    fn from(e: AskError<RegionError>) -> Self {
        match e {
            AskError::Agent(a) => a.into(),
            AskError::Content(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cut {
    North,
    South,
    East,
    West,
    Central,
}

/// What to geocode and how to adjust the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub place: String,
    #[serde(default)]
    pub cut: Option<Cut>,
    #[serde(default)]
    pub scale: Option<f64>,
}

impl Directive {
    pub fn place(place: impl Into<String>) -> Self {
        Self { place: place.into(), cut: None, scale: None }
    }

    /// Validates the Bounding Box Modifier's JSON reply.
    pub fn from_value(v: &Value) -> Result<Self, RegionError> {
        let bad = |m: &str| RegionError::MalformedDirective(m.to_string());
        let obj = v.as_object().ok_or_else(|| bad("expected a JSON object"))?;
        let place = obj
            .get("place")
            .and_then(Value::as_str)
            .map(collapse_ws)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| bad("missing place"))?;
        let cut = match obj.get("cut") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) if s.trim().is_empty() || s.eq_ignore_ascii_case("none") => None,
            Some(Value::String(s)) => Some(match s.trim().to_lowercase().as_str() {
                "north" | "northern" => Cut::North,
                "south" | "southern" => Cut::South,
                "east" | "eastern" => Cut::East,
                "west" | "western" => Cut::West,
                "central" | "center" | "centre" => Cut::Central,
                other => return Err(bad(&format!("unknown cut `{other}`"))),
            }),
            Some(_) => return Err(bad("cut must be a string")),
        };
        let scale = match obj.get("scale") {
            None | Some(Value::Null) => None,
            Some(Value::Number(n)) => {
                let s = n.as_f64().unwrap_or(f64::NAN);
                if !(s > 0.0 && s.is_finite()) {
                    return Err(bad("scale must be a positive number"));
                }
                Some(s)
            }
            Some(_) => return Err(bad("scale must be a number")),
        };
        Ok(Self { place, cut, scale })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeocodeResult {
    pub bounding_box: BoundingBox,
    pub display_name: String,
}

pub trait Geocoder: Send + Sync {
    fn geocode(&self, place: &str) -> Result<GeocodeResult, RegionError>;
}

fn place_key(place: &str) -> String {
    collapse_ws(&place.to_lowercase())
}

/// Offline geocoder backed by a JSON object `place -> {bounding_box, display_name}`.
/// Lookups ignore case and repeated whitespace.
#[derive(Debug, Clone, Default)]
pub struct FixtureGeocoder {
    places: HashMap<String, GeocodeResult>,
}

impl FixtureGeocoder {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: HashMap<String, GeocodeResult> = serde_json::from_str(text)?;
        Ok(Self { places: raw.into_iter().map(|(k, v)| (place_key(&k), v)).collect() })
    }

    pub fn load(path: &Path) -> Result<Self, RegionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegionError::GeocoderUnavailable(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| RegionError::GeocoderUnavailable(format!("{}: {e}", path.display())))
    }

    pub fn insert(&mut self, place: &str, result: GeocodeResult) {
        self.places.insert(place_key(place), result);
    }
}

impl Geocoder for FixtureGeocoder {
    fn geocode(&self, place: &str) -> Result<GeocodeResult, RegionError> {
        self.places.get(&place_key(place)).cloned().ok_or_else(|| RegionError::PlaceNotFound(place.into()))
    }
}

/// Client for a Nominatim-style `GET {base}/search?q=…&format=json` endpoint.
pub struct HttpGeocoder {
    client: reqwest::blocking::Client,
    base_url: String,
}

#[derive(Deserialize)]
struct WirePlace {
    boundingbox: [String; 4],
    #[serde(default)]
    display_name: String,
}

impl HttpGeocoder {
    pub fn new(base_url: &str, user_agent: &str, timeout: Duration) -> Result<Self, RegionError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(user_agent)
            .build()
            .map_err(|e| RegionError::GeocoderUnavailable(e.to_string()))?;
        Ok(Self { client, base_url: base_url.trim_end_matches('/').to_string() })
    }
}

impl Geocoder for HttpGeocoder {
    fn geocode(&self, place: &str) -> Result<GeocodeResult, RegionError> {
        let unavailable = |e: String| RegionError::GeocoderUnavailable(e);
        let resp = self
            .client
            .get(format!("{}/search", self.base_url))
            .query(&[("q", place), ("format", "json"), ("limit", "1")])
            .send()
            .map_err(|e| unavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unavailable(format!("status {}", resp.status())));
        }
        let hits: Vec<WirePlace> = resp.json().map_err(|e| unavailable(e.to_string()))?;
        let first = hits.into_iter().next().ok_or_else(|| RegionError::PlaceNotFound(place.into()))?;
        let mut v = [0.0; 4];
        for (slot, s) in v.iter_mut().zip(&first.boundingbox) {
            *slot = s.parse().map_err(|_| unavailable(format!("bad bounding box value `{s}`")))?;
        }
        let bounding_box =
            BoundingBox::from_array(v).ok_or_else(|| unavailable(format!("invalid bounding box {v:?}")))?;
        Ok(GeocodeResult { bounding_box, display_name: first.display_name })
    }
}

/// Applies the cut, then the center-preserving scale. Results are clamped to
/// WGS84 ranges.
pub fn modify_bbox(bbox: &BoundingBox, directive: &Directive) -> Result<BoundingBox, RegionError> {
    let [mut min_lat, mut max_lat, mut min_lon, mut max_lon] = bbox.to_array();
    let mid_lat = (min_lat + max_lat) / 2.0;
    let mid_lon = (min_lon + max_lon) / 2.0;
    match directive.cut {
        None => {}
        Some(Cut::North) => min_lat = mid_lat,
        Some(Cut::South) => max_lat = mid_lat,
        Some(Cut::East) => min_lon = mid_lon,
        Some(Cut::West) => max_lon = mid_lon,
        Some(Cut::Central) => {
            let (qlat, qlon) = ((max_lat - min_lat) / 4.0, (max_lon - min_lon) / 4.0);
            (min_lat, max_lat) = (min_lat + qlat, max_lat - qlat);
            (min_lon, max_lon) = (min_lon + qlon, max_lon - qlon);
        }
    }
    if let Some(s) = directive.scale {
        if !(s > 0.0 && s.is_finite()) {
            return Err(RegionError::MalformedDirective("scale must be a positive number".into()));
        }
        let (clat, clon) = ((min_lat + max_lat) / 2.0, (min_lon + max_lon) / 2.0);
        let (hlat, hlon) = ((max_lat - min_lat) / 2.0 * s, (max_lon - min_lon) / 2.0 * s);
        (min_lat, max_lat) = ((clat - hlat).max(-90.0), (clat + hlat).min(90.0));
        (min_lon, max_lon) = ((clon - hlon).max(-180.0), (clon + hlon).min(180.0));
    }
    if max_lat - min_lat <= 0.0 || max_lon - min_lon <= 0.0 {
        return Err(RegionError::DegenerateBox);
    }
    BoundingBox::new(min_lat, max_lat, min_lon, max_lon).ok_or(RegionError::DegenerateBox)
}

/// Resolves region text through the Bounding Box Modifier agent and a geocoder.
pub struct RegionSelector {
    geocoder: Box<dyn Geocoder>,
}

impl RegionSelector {
    pub fn new(geocoder: Box<dyn Geocoder>) -> Self {
        Self { geocoder }
    }

    pub fn geocode(&self, place: &str) -> Result<GeocodeResult, RegionError> {
        let place = collapse_ws(place);
        if place.is_empty() {
            return Err(RegionError::MalformedDirective("empty place".into()));
        }
        self.geocoder.geocode(&place)
    }

    /// Asks the agent for a directive.
    pub fn directive(&self, gateway: &Gateway, session: &str, region_text: &str) -> Result<Directive, RegionError> {
        let ask = Ask::new(AgentRole::BboxModifier, format!("region: {}", collapse_ws(region_text)));
        Ok(gateway.ask_parsed(session, &ask, |reply| {
            let v = extract_json(reply).map_err(|e| RegionError::MalformedDirective(e.to_string()))?;
            Directive::from_value(&v)
        })?)
    }

    /// `None` for an empty region (global search). Results are memoized in
    /// `cache`, which the caller keeps per session.
    pub fn resolve_region(
        &self,
        gateway: &Gateway,
        session: &str,
        region_text: &str,
        cache: &mut HashMap<String, BoundingBox>,
    ) -> Result<Option<BoundingBox>, RegionError> {
        let key = place_key(region_text);
        if key.is_empty() {
            return Ok(None);
        }
        if let Some(b) = cache.get(&key) {
            return Ok(Some(*b));
        }
        let directive = self.directive(gateway, session, region_text)?;
        let found = self.geocode(&directive.place)?;
        let bbox = modify_bbox(&found.bounding_box, &directive)?;
        cache.insert(key, bbox);
        Ok(Some(bbox))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn maxvorstadt() -> BoundingBox {
        BoundingBox::from_array([48.139603, 48.157637, 11.538923, 11.588192]).unwrap()
    }

    fn cut(c: Cut) -> Directive {
        Directive { cut: Some(c), ..Directive::place("x") }
    }

    #[test]
    fn directional_cuts() {
        let south = modify_bbox(&maxvorstadt(), &cut(Cut::South)).unwrap().to_array();
        for (a, b) in south.iter().zip([48.139603, 48.148620, 11.538923, 11.588192]) {
            assert!((a - b).abs() < 1e-9);
        }
        let east = modify_bbox(&maxvorstadt(), &cut(Cut::East)).unwrap().to_array();
        assert!((east[2] - 11.5635575).abs() < 1e-9);
    }

    #[test]
    fn scaling_preserves_center() {
        let b = BoundingBox::from_array([0.0, 1.0, 0.0, 1.0]).unwrap();
        let d = Directive { scale: Some(2.0), ..Directive::place("x") };
        assert_eq!(modify_bbox(&b, &d).unwrap().to_array(), [-0.5, 1.5, -0.5, 1.5]);
    }

    #[test]
    fn directive_validation() {
        let d = Directive::from_value(&json!({"place": "Maxvorstadt", "cut": "south", "scale": null})).unwrap();
        assert_eq!(d.cut, Some(Cut::South));
        assert!(Directive::from_value(&json!({"place": "x", "cut": "upper"})).is_err());
        assert!(Directive::from_value(&json!({"place": "x", "scale": -1})).is_err());
        assert!(Directive::from_value(&json!({"cut": "south"})).is_err());
    }

    #[test]
    fn fixture_lookup_ignores_case() {
        let g = FixtureGeocoder::from_json(
            r#"{"Munich Maxvorstadt": {"bounding_box": [48.139603, 48.157637, 11.538923, 11.588192], "display_name": "Maxvorstadt"}}"#,
        )
        .unwrap();
        assert_eq!(g.geocode("munich  maxvorstadt").unwrap().bounding_box, maxvorstadt());
        assert_eq!(g.geocode("Zzqxv-Nowhere-123"), Err(RegionError::PlaceNotFound("Zzqxv-Nowhere-123".into())));
    }
}
