//! Spatial relation classification and set filtering.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{extract_json, AgentError, AgentRole, Ask, AskError, Gateway};
use crate::geometry::{base_relation, SpatialOpSpec, SpatialType};
use crate::{BoundingBox, GeoSet, SpatialIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Subject,
    Object,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzerError {
    #[error("{0:?} id list is empty")]
    EmptyInput(Side),
    #[error("unknown spatial type `{0}`")]
    UnknownSpatialType(String),
    #[error("buffer relation requires a distance")]
    MissingDistance,
    #[error("buffer distance must be positive, got {0}")]
    InvalidDistance(f64),
    #[error("malformed spatial operation: {0}")]
    Malformed(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<AskError<AnalyzerError>> for AnalyzerError {
    fn from(e: AskError<AnalyzerError>) -> Self {
        match e {
            AskError::Agent(a) => a.into(),
            AskError::Content(c) => c,
        }
    }
}

/// Filtered subject and object sets, each a subset of its input in input order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub subject: GeoSet,
    pub object: GeoSet,
}

/// Validates an operation object `{spatial_type, num, negation}`.
pub fn parse_op_spec(value: &Value) -> Result<SpatialOpSpec, AnalyzerError> {
    let obj = value.as_object().ok_or_else(|| AnalyzerError::Malformed("expected a JSON object".into()))?;
    let raw = obj
        .get("spatial_type")
        .and_then(Value::as_str)
        .ok_or_else(|| AnalyzerError::Malformed("missing spatial_type".into()))?;
    let spatial_type = match raw.trim().to_lowercase().as_str() {
        "buffer" => SpatialType::Buffer,
        "intersects" | "intersect" => SpatialType::Intersects,
        "contains" | "contain" => SpatialType::Contains,
        "within" => SpatialType::Within,
        _ => return Err(AnalyzerError::UnknownSpatialType(raw.into())),
    };
    let num = match obj.get("num") {
        None | Some(Value::Null) => None,
        Some(Value::Number(n)) => n.as_f64(),
        Some(Value::String(s)) if s.trim().is_empty() => None,
        Some(Value::String(s)) => Some(
            s.trim()
                .trim_end_matches(['m', 'M'])
                .trim()
                .parse::<f64>()
                .map_err(|_| AnalyzerError::Malformed(format!("num `{s}` is not a number")))?,
        ),
        Some(other) => return Err(AnalyzerError::Malformed(format!("num {other} is not a number"))),
    };
    let negation = match obj.get("negation") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
        Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
        Some(other) => return Err(AnalyzerError::Malformed(format!("negation {other} is not a boolean"))),
    };
    let num = match spatial_type {
        SpatialType::Buffer => {
            let n = num.ok_or(AnalyzerError::MissingDistance)?;
            if !(n > 0.0 && n.is_finite()) {
                return Err(AnalyzerError::InvalidDistance(n));
            }
            Some(n)
        }
        _ => None,
    };
    Ok(SpatialOpSpec::new(spatial_type, num, negation))
}

/// Asks the Modify Agent to map a relation phrase onto a spatial operation.
pub fn classify_relation(gateway: &Gateway, session: &str, relation_text: &str) -> Result<SpatialOpSpec, AnalyzerError> {
    let text = relation_text.trim();
    if text.is_empty() {
        return Err(AnalyzerError::Malformed("empty relation text".into()));
    }
    let ask = Ask::new(AgentRole::ModifyAgent, format!("relation: {text}"));
    Ok(gateway.ask_parsed(session, &ask, |reply| {
        let value = extract_json(reply).map_err(|e| AnalyzerError::Malformed(e.to_string()))?;
        parse_op_spec(&value)
    })?)
}

const LAT_M_PER_DEG: f64 = 110_574.0;
const LON_M_PER_DEG_EQ: f64 = 111_320.0;
const PRUNE_INFLATION: f64 = 1.05;

/// Degree margins `(dlat, dlon)` that enclose every point within `meters` of `bbox`.
fn buffer_margin(bbox: &BoundingBox, meters: f64) -> (f64, f64) {
    let dlat = meters / LAT_M_PER_DEG * PRUNE_INFLATION;
    let max_lat = bbox.min_lat.abs().max(bbox.max_lat.abs()) + dlat;
    let cos = max_lat.min(90.0).to_radians().cos();
    let dlon = if cos < 1e-6 { 360.0 } else { meters / (LON_M_PER_DEG_EQ * cos) * PRUNE_INFLATION };
    (dlat, dlon)
}

/// Keeps subjects that stand in the (possibly negated) relation to the
/// object set and the objects related to a kept subject.
///
/// A subject is kept when some object satisfies the plain relation, or under
/// negation when none does. Candidate pairs come from an STR-tree over the
/// objects; every pair it skips is disjoint in its bounding boxes (expanded by
/// the buffer distance), so the plain relation is false there.
pub fn geo_filter(spec: &SpatialOpSpec, subject: &GeoSet, object: &GeoSet) -> Result<FilterResult, AnalyzerError> {
    if subject.is_empty() {
        return Err(AnalyzerError::EmptyInput(Side::Subject));
    }
    if object.is_empty() {
        return Err(AnalyzerError::EmptyInput(Side::Object));
    }
    if spec.spatial_type == SpatialType::Buffer {
        match spec.num {
            None => return Err(AnalyzerError::MissingDistance),
            Some(n) if !(n >= 0.0 && n.is_finite()) => return Err(AnalyzerError::InvalidDistance(n)),
            _ => {}
        }
    }
    let index = SpatialIndex::build(object);
    let mut keep_subject = vec![false; subject.len()];
    let mut related_object = vec![false; object.len()];
    for (si, (_, s)) in subject.iter().enumerate() {
        let mut query = s.bbox();
        if let (SpatialType::Buffer, Some(num)) = (spec.spatial_type, spec.num) {
            let (dlat, dlon) = buffer_margin(&query, num);
            query = query.expanded(dlat, dlon);
        }
        let mut any = false;
        for oi in index.query(&query) {
            let (_, o) = object.get_index(oi).expect("index positions are in range");
            if base_relation(s, o, spec).map_err(|_| AnalyzerError::MissingDistance)? {
                any = true;
                related_object[oi] = true;
            }
        }
        keep_subject[si] = any != spec.negation;
    }
    let subject_out = subject.select_positions(&keep_subject);
    let object_out = if spec.negation {
        // A kept subject is unrelated to every object, so under negation it
        // relates to all of them.
        if subject_out.is_empty() {
            GeoSet::new()
        } else {
            object.clone()
        }
    } else {
        object.select_positions(&related_object)
    };
    Ok(FilterResult { subject: subject_out, object: object_out })
}
