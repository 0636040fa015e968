//! Planar topological predicates on lon/lat coordinates and metric distance
//! via haversine.
//!
//! `contains` uses closed-set (covers) semantics: `b` is contained when every
//! point of `b` lies in the interior or on the boundary of `a`. Under this
//! reading a geometry contains itself, `contains ⇒ intersects`, and
//! `within(a, b) ⇔ contains(b, a)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Coord, Geometry, Polygon};
use crate::scalar::Scalar;

/// Mean earth radius used for every metric computation.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpatialType {
    Buffer,
    Intersects,
    Contains,
    Within,
}

impl SpatialType {
    pub const ALL: [SpatialType; 4] = [
        SpatialType::Buffer,
        SpatialType::Intersects,
        SpatialType::Contains,
        SpatialType::Within,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SpatialType::Buffer => "buffer",
            SpatialType::Intersects => "intersects",
            SpatialType::Contains => "contains",
            SpatialType::Within => "within",
        }
    }
}

impl fmt::Display for SpatialType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A canonical spatial operation: type, buffer distance in meters, negation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialOpSpec {
    pub spatial_type: SpatialType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num: Option<f64>,
    #[serde(default)]
    pub negation: bool,
}

impl SpatialOpSpec {
    pub fn new(spatial_type: SpatialType, num: Option<f64>, negation: bool) -> Self {
        Self { spatial_type, num, negation }
    }

    pub fn buffer(meters: f64) -> Self {
        Self::new(SpatialType::Buffer, Some(meters), false)
    }

    pub fn of(spatial_type: SpatialType) -> Self {
        Self::new(spatial_type, None, false)
    }

    pub fn negated(mut self) -> Self {
        self.negation = !self.negation;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelateError {
    #[error("buffer relation requires a distance")]
    MissingDistance,
}

/// Evaluates `subject <spec> object`. Negation complements the plain result.
pub fn relate<T: Scalar>(
    subject: &Geometry<T>,
    object: &Geometry<T>,
    spec: &SpatialOpSpec,
) -> Result<bool, RelateError> {
    Ok(base_relation(subject, object, spec)? != spec.negation)
}

/// The relation without negation applied.
pub(crate) fn base_relation<T: Scalar>(
    subject: &Geometry<T>,
    object: &Geometry<T>,
    spec: &SpatialOpSpec,
) -> Result<bool, RelateError> {
    Ok(match spec.spatial_type {
        SpatialType::Buffer => {
            let num = spec.num.ok_or(RelateError::MissingDistance)?;
            distance_m(subject, object) <= T::lit(num)
        }
        SpatialType::Intersects => intersects(subject, object),
        SpatialType::Contains => contains(subject, object),
        SpatialType::Within => contains(object, subject),
    })
}

pub fn haversine_m<T: Scalar>(a: Coord<T>, b: Coord<T>) -> T {
    let rad = T::lit(std::f64::consts::PI / 180.0);
    let (lat1, lat2) = (a.lat * rad, b.lat * rad);
    let dlat = (b.lat - a.lat) * rad;
    let dlon = (b.lon - a.lon) * rad;
    let two = T::lit(2.0);
    let h = (dlat / two).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / two).sin().powi(2);
    two * T::lit(EARTH_RADIUS_M) * h.sqrt().min(T::one()).asin()
}

/// Meters per degree of longitude and latitude at `lat`.
pub(crate) fn meters_per_degree<T: Scalar>(lat: T) -> (T, T) {
    let k = T::lit(EARTH_RADIUS_M * std::f64::consts::PI / 180.0);
    (k * lat.to_radians().cos(), k)
}

/// Minimum great-circle distance between two shapes in meters; zero when they
/// intersect.
pub fn distance_m<T: Scalar>(a: &Geometry<T>, b: &Geometry<T>) -> T {
    if intersects(a, b) {
        return T::zero();
    }
    one_way(a, b).min(one_way(b, a))
}

fn one_way<T: Scalar>(from: &Geometry<T>, to: &Geometry<T>) -> T {
    let segs = to.segments();
    let targets = to.vertices();
    let mut best = T::infinity();
    for v in from.vertices() {
        let d = if segs.is_empty() {
            targets.iter().map(|t| haversine_m(v, *t)).fold(T::infinity(), T::min)
        } else {
            segs.iter().map(|s| point_segment_m(v, *s)).fold(T::infinity(), T::min)
        };
        best = best.min(d);
    }
    best
}

/// Nearest point on the segment found in a local equirectangular frame
/// centered on `p`, then measured with haversine.
fn point_segment_m<T: Scalar>(p: Coord<T>, (s0, s1): (Coord<T>, Coord<T>)) -> T {
    let (kx, ky) = meters_per_degree(p.lat);
    let (ax, ay) = ((s0.lon - p.lon) * kx, (s0.lat - p.lat) * ky);
    let (bx, by) = ((s1.lon - p.lon) * kx, (s1.lat - p.lat) * ky);
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > T::zero() {
        (-(ax * dx + ay * dy) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    let nearest = Coord::new(s0.lon + (s1.lon - s0.lon) * t, s0.lat + (s1.lat - s0.lat) * t);
    haversine_m(p, nearest)
}

// ---------------------------------------------------------------------------
// planar primitives

fn orient<T: Scalar>(a: Coord<T>, b: Coord<T>, c: Coord<T>) -> T {
    (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon)
}

fn within_span<T: Scalar>(p: Coord<T>, a: Coord<T>, b: Coord<T>) -> bool {
    p.lon >= a.lon.min(b.lon) && p.lon <= a.lon.max(b.lon) && p.lat >= a.lat.min(b.lat) && p.lat <= a.lat.max(b.lat)
}

fn on_segment<T: Scalar>(p: Coord<T>, a: Coord<T>, b: Coord<T>) -> bool {
    orient(a, b, p) == T::zero() && within_span(p, a, b)
}

fn segments_intersect<T: Scalar>(p1: Coord<T>, p2: Coord<T>, q1: Coord<T>, q2: Coord<T>) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    let zero = T::zero();
    if ((d1 > zero && d2 < zero) || (d1 < zero && d2 > zero)) && ((d3 > zero && d4 < zero) || (d3 < zero && d4 > zero)) {
        return true;
    }
    (d1 == zero && within_span(p1, q1, q2))
        || (d2 == zero && within_span(p2, q1, q2))
        || (d3 == zero && within_span(q1, p1, p2))
        || (d4 == zero && within_span(q2, p1, p2))
}

/// Parameters along `a→b` where it meets segment `c→d` (crossings and the
/// ends of collinear overlaps).
fn crossing_params<T: Scalar>(a: Coord<T>, b: Coord<T>, c: Coord<T>, d: Coord<T>, out: &mut Vec<T>) {
    let r = (b.lon - a.lon, b.lat - a.lat);
    let s = (d.lon - c.lon, d.lat - c.lat);
    let denom = r.0 * s.1 - r.1 * s.0;
    let qp = (c.lon - a.lon, c.lat - a.lat);
    let zero = T::zero();
    if denom != zero {
        let t = (qp.0 * s.1 - qp.1 * s.0) / denom;
        let u = (qp.0 * r.1 - qp.1 * r.0) / denom;
        if t >= zero && t <= T::one() && u >= zero && u <= T::one() {
            out.push(t);
        }
        return;
    }
    let rr = r.0 * r.0 + r.1 * r.1;
    if rr == zero || orient(a, b, c) != zero {
        return;
    }
    for p in [c, d] {
        let t = ((p.lon - a.lon) * r.0 + (p.lat - a.lat) * r.1) / rr;
        if t >= zero && t <= T::one() {
            out.push(t);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Loc {
    Inside,
    Boundary,
    Outside,
}

fn ring_contains_strict<T: Scalar>(p: Coord<T>, ring: &[Coord<T>]) -> bool {
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

fn on_ring<T: Scalar>(p: Coord<T>, ring: &[Coord<T>]) -> bool {
    ring.windows(2).any(|w| on_segment(p, w[0], w[1]))
}

fn locate_in_polygon<T: Scalar>(p: Coord<T>, poly: &Polygon<T>) -> Loc {
    if poly.rings().any(|r| on_ring(p, r)) {
        return Loc::Boundary;
    }
    if ring_contains_strict(p, &poly.exterior) && !poly.interiors.iter().any(|h| ring_contains_strict(p, h)) {
        Loc::Inside
    } else {
        Loc::Outside
    }
}

fn locate<T: Scalar>(p: Coord<T>, polys: &[Polygon<T>]) -> Loc {
    let mut loc = Loc::Outside;
    for poly in polys {
        match locate_in_polygon(p, poly) {
            Loc::Inside => return Loc::Inside,
            Loc::Boundary => loc = Loc::Boundary,
            Loc::Outside => {}
        }
    }
    loc
}

fn boundary_segments<T: Scalar>(polys: &[Polygon<T>]) -> Vec<(Coord<T>, Coord<T>)> {
    polys
        .iter()
        .flat_map(Polygon::rings)
        .flat_map(|r| r.windows(2).map(|w| (w[0], w[1])))
        .collect()
}

/// Sample points along `a→b`: both ends plus the midpoint of every piece
/// between consecutive boundary crossings.
fn split_samples<T: Scalar>(a: Coord<T>, b: Coord<T>, cutters: &[(Coord<T>, Coord<T>)]) -> Vec<Coord<T>> {
    let mut ts = vec![T::zero(), T::one()];
    for (c, d) in cutters {
        crossing_params(a, b, *c, *d, &mut ts);
    }
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    ts.dedup();
    let at = |t: T| Coord::new(a.lon + (b.lon - a.lon) * t, a.lat + (b.lat - a.lat) * t);
    let mut out = vec![a, b];
    let two = T::lit(2.0);
    for w in ts.windows(2) {
        out.push(at((w[0] + w[1]) / two));
    }
    out
}

fn segment_in_area<T: Scalar>(a: Coord<T>, b: Coord<T>, polys: &[Polygon<T>], cutters: &[(Coord<T>, Coord<T>)]) -> bool {
    split_samples(a, b, cutters)
        .into_iter()
        .all(|p| locate(p, polys) != Loc::Outside)
}

/// A point strictly inside the polygon, found on a horizontal scanline.
fn interior_sample<T: Scalar>(poly: &Polygon<T>) -> Option<Coord<T>> {
    let ys: Vec<T> = poly.exterior.iter().map(|c| c.lat).collect();
    let (lo, hi) = ys.iter().fold((T::infinity(), T::neg_infinity()), |(l, h), &y| (l.min(y), h.max(y)));
    if !(hi > lo) {
        return None;
    }
    let mut distinct = ys.clone();
    for h in &poly.interiors {
        distinct.extend(h.iter().map(|c| c.lat));
    }
    distinct.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    let two = T::lit(2.0);
    // scan between consecutive vertex latitudes so the line never hits a vertex
    for w in distinct.windows(2) {
        let y = (w[0] + w[1]) / two;
        if !(y > w[0] && y < w[1]) {
            continue;
        }
        let mut xs: Vec<T> = Vec::new();
        for ring in poly.rings() {
            for s in ring.windows(2) {
                let (a, b) = (s[0], s[1]);
                if (a.lat > y) != (b.lat > y) {
                    xs.push(a.lon + (y - a.lat) * (b.lon - a.lon) / (b.lat - a.lat));
                }
            }
        }
        xs.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        for pair in xs.chunks(2) {
            if let [x0, x1] = pair {
                if x1 > x0 {
                    let p = Coord::new((*x0 + *x1) / two, y);
                    if locate_in_polygon(p, poly) == Loc::Inside {
                        return Some(p);
                    }
                }
            }
        }
    }
    None
}

// ---------------------------------------------------------------------------
// predicates

pub(crate) fn intersects<T: Scalar>(a: &Geometry<T>, b: &Geometry<T>) -> bool {
    if !a.bbox().intersects(&b.bbox()) {
        return false;
    }
    let (sa, sb) = (a.segments(), b.segments());
    for (p1, p2) in &sa {
        for (q1, q2) in &sb {
            if segments_intersect(*p1, *p2, *q1, *q2) {
                return true;
            }
        }
    }
    if let (Geometry::Point(p), Geometry::Point(q)) = (a, b) {
        return p == q;
    }
    for (pt, other, other_segs) in [(a, b, &sb), (b, a, &sa)] {
        if let Geometry::Point(p) = pt {
            if other_segs.iter().any(|(c, d)| on_segment(*p, *c, *d)) {
                return true;
            }
            return locate(*p, other.polygons()) != Loc::Outside;
        }
    }
    let (pa, pb) = (a.polygons(), b.polygons());
    (!pb.is_empty() && a.vertices().iter().any(|v| locate(*v, pb) != Loc::Outside))
        || (!pa.is_empty() && b.vertices().iter().any(|v| locate(*v, pa) != Loc::Outside))
}

pub(crate) fn contains<T: Scalar>(a: &Geometry<T>, b: &Geometry<T>) -> bool {
    let (ba, bb) = (a.bbox(), b.bbox());
    if !(ba.min_lat <= bb.min_lat && ba.max_lat >= bb.max_lat && ba.min_lon <= bb.min_lon && ba.max_lon >= bb.max_lon) {
        return false;
    }
    match a {
        Geometry::Point(p) => b.vertices().iter().all(|v| v == p),
        Geometry::LineString(line) => match b {
            Geometry::Point(q) => line.windows(2).any(|w| on_segment(*q, w[0], w[1])),
            Geometry::LineString(other) => other.windows(2).all(|w| line_covers_segment(line, w[0], w[1])),
            _ => false,
        },
        Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
            let polys = a.polygons();
            let cutters = boundary_segments(polys);
            match b {
                Geometry::Point(q) => locate(*q, polys) != Loc::Outside,
                Geometry::LineString(cs) => cs.windows(2).all(|w| segment_in_area(w[0], w[1], polys, &cutters)),
                Geometry::Polygon(_) | Geometry::MultiPolygon(_) => {
                    let inner = b.polygons();
                    let inner_cutters = boundary_segments(inner);
                    inner_cutters.iter().all(|(p, q)| segment_in_area(*p, *q, polys, &cutters))
                        && !cutters.iter().any(|(p, q)| {
                            split_samples(*p, *q, &inner_cutters)
                                .into_iter()
                                .any(|s| locate(s, inner) == Loc::Inside)
                        })
                        && inner
                            .iter()
                            .filter_map(interior_sample)
                            .all(|s| locate(s, polys) != Loc::Outside)
                }
            }
        }
    }
}

fn line_covers_segment<T: Scalar>(line: &[Coord<T>], a: Coord<T>, b: Coord<T>) -> bool {
    let r = (b.lon - a.lon, b.lat - a.lat);
    let rr = r.0 * r.0 + r.1 * r.1;
    if rr == T::zero() {
        return line.windows(2).any(|w| on_segment(a, w[0], w[1]));
    }
    let mut intervals: Vec<(T, T)> = Vec::new();
    for w in line.windows(2) {
        let (c, d) = (w[0], w[1]);
        if orient(a, b, c) != T::zero() || orient(a, b, d) != T::zero() {
            continue;
        }
        let tc = ((c.lon - a.lon) * r.0 + (c.lat - a.lat) * r.1) / rr;
        let td = ((d.lon - a.lon) * r.0 + (d.lat - a.lat) * r.1) / rr;
        intervals.push((tc.min(td), tc.max(td)));
    }
    intervals.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut reach = T::zero();
    for (lo, hi) in intervals {
        if lo > reach {
            break;
        }
        reach = reach.max(hi);
    }
    reach >= T::one()
}
