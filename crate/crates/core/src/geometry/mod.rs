//! WKT geometries in WGS84 lon/lat degrees, bounding boxes, entity keys,
//! spatial predicates and a packed STR-tree index.

mod bbox;
mod geoset;
mod index;
mod key;
mod predicates;
mod wkt;

pub use bbox::BoundingBox;
pub use geoset::GeoSet;
pub use index::SpatialIndex;
pub use key::{EntityKey, KeyParseError};
pub use predicates::{
    distance_m, haversine_m, relate, RelateError, SpatialOpSpec, SpatialType, EARTH_RADIUS_M,
};
pub use wkt::parse_wkt;
pub(crate) use predicates::base_relation;

use std::fmt;

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("malformed WKT at byte {position}: {reason}")]
    MalformedWkt { position: usize, reason: String },
    #[error("unsupported geometry kind `{0}`")]
    UnsupportedKind(String),
    #[error("coordinate ({lon}, {lat}) outside WGS84 range")]
    OutOfRange { lon: String, lat: String },
}

/// A lon/lat vertex in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Coord<T> {
    pub lon: T,
    pub lat: T,
}

impl<T: Scalar> Coord<T> {
    pub fn new(lon: T, lat: T) -> Self {
        Self { lon, lat }
    }

    fn in_range(&self) -> bool {
        let (lon, lat) = (self.lon.to_f64_lossy(), self.lat.to_f64_lossy());
        (-180.0..=180.0).contains(&lon) && (-90.0..=90.0).contains(&lat)
    }
}

/// Polygon with a closed exterior ring and optional closed holes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon<T> {
    pub exterior: Vec<Coord<T>>,
    pub interiors: Vec<Vec<Coord<T>>>,
}

impl<T: Scalar> Polygon<T> {
    pub fn new(exterior: Vec<Coord<T>>, interiors: Vec<Vec<Coord<T>>>) -> Self {
        Self { exterior, interiors }
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Coord<T>]> {
        std::iter::once(self.exterior.as_slice()).chain(self.interiors.iter().map(Vec::as_slice))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeometryKind {
    Point,
    LineString,
    Polygon,
    MultiPolygon,
}

impl GeometryKind {
    pub fn wkt_tag(self) -> &'static str {
        match self {
            GeometryKind::Point => "POINT",
            GeometryKind::LineString => "LINESTRING",
            GeometryKind::Polygon => "POLYGON",
            GeometryKind::MultiPolygon => "MULTIPOLYGON",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry<T> {
    Point(Coord<T>),
    LineString(Vec<Coord<T>>),
    Polygon(Polygon<T>),
    MultiPolygon(Vec<Polygon<T>>),
}

impl<T: Scalar> Geometry<T> {
    pub fn point(lon: T, lat: T) -> Self {
        Geometry::Point(Coord::new(lon, lat))
    }

    /// Axis-aligned rectangle polygon, counter-clockwise from the south-west corner.
    pub fn rect(min_lon: T, min_lat: T, max_lon: T, max_lat: T) -> Self {
        let ring = vec![
            Coord::new(min_lon, min_lat),
            Coord::new(max_lon, min_lat),
            Coord::new(max_lon, max_lat),
            Coord::new(min_lon, max_lat),
            Coord::new(min_lon, min_lat),
        ];
        Geometry::Polygon(Polygon::new(ring, vec![]))
    }

    pub fn kind(&self) -> GeometryKind {
        match self {
            Geometry::Point(_) => GeometryKind::Point,
            Geometry::LineString(_) => GeometryKind::LineString,
            Geometry::Polygon(_) => GeometryKind::Polygon,
            Geometry::MultiPolygon(_) => GeometryKind::MultiPolygon,
        }
    }

    /// Polygons making up the areal part of the geometry (empty for points and lines).
    pub fn polygons(&self) -> &[Polygon<T>] {
        match self {
            Geometry::Polygon(p) => std::slice::from_ref(p),
            Geometry::MultiPolygon(ps) => ps,
            _ => &[],
        }
    }

    pub fn vertices(&self) -> Vec<Coord<T>> {
        match self {
            Geometry::Point(c) => vec![*c],
            Geometry::LineString(cs) => cs.clone(),
            Geometry::Polygon(p) => p.rings().flatten().copied().collect(),
            Geometry::MultiPolygon(ps) => ps.iter().flat_map(|p| p.rings().flatten().copied()).collect(),
        }
    }

    /// All boundary or path segments. Points have none.
    pub fn segments(&self) -> Vec<(Coord<T>, Coord<T>)> {
        fn pairs<T: Copy>(cs: &[Coord<T>], out: &mut Vec<(Coord<T>, Coord<T>)>) {
            out.extend(cs.windows(2).map(|w| (w[0], w[1])));
        }
        let mut out = Vec::new();
        match self {
            Geometry::Point(_) => {}
            Geometry::LineString(cs) => pairs(cs, &mut out),
            Geometry::Polygon(p) => p.rings().for_each(|r| pairs(r, &mut out)),
            Geometry::MultiPolygon(ps) => ps.iter().flat_map(Polygon::rings).for_each(|r| pairs(r, &mut out)),
        }
        out
    }

    pub fn bbox(&self) -> BoundingBox<T> {
        let vs = self.vertices();
        let mut b = BoundingBox::degenerate(vs[0]);
        for v in &vs[1..] {
            b.extend(*v);
        }
        b
    }

    /// Planar area converted to square meters with a local equirectangular projection.
    pub fn area_m2(&self) -> T {
        let polys = self.polygons();
        if polys.is_empty() {
            return T::zero();
        }
        let center = self.bbox().center();
        let (kx, ky) = predicates::meters_per_degree(center.lat);
        let ring_area = |ring: &[Coord<T>]| -> T {
            let mut acc = T::zero();
            for w in ring.windows(2) {
                let (x0, y0) = ((w[0].lon - center.lon) * kx, (w[0].lat - center.lat) * ky);
                let (x1, y1) = ((w[1].lon - center.lon) * kx, (w[1].lat - center.lat) * ky);
                acc = acc + (x0 * y1 - x1 * y0);
            }
            (acc / T::lit(2.0)).abs()
        };
        polys
            .iter()
            .map(|p| ring_area(&p.exterior) - p.interiors.iter().map(|r| ring_area(r)).sum::<T>())
            .sum()
    }

    /// Path length for lines, perimeter for polygons, in meters.
    pub fn length_m(&self) -> T {
        self.segments().iter().map(|(a, b)| haversine_m(*a, *b)).sum()
    }

    pub fn to_wkt(&self) -> String {
        self.to_string()
    }

    pub(crate) fn validate(&self) -> Result<(), GeometryError> {
        for v in self.vertices() {
            if !v.in_range() || v.lon.is_nan() || v.lat.is_nan() {
                return Err(GeometryError::OutOfRange {
                    lon: v.lon.to_string(),
                    lat: v.lat.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Converts the coordinates to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Geometry<U> {
        let c = |c: &Coord<T>| Coord::new(U::lit(c.lon.to_f64_lossy()), U::lit(c.lat.to_f64_lossy()));
        let ring = |r: &Vec<Coord<T>>| r.iter().map(c).collect::<Vec<_>>();
        let poly = |p: &Polygon<T>| Polygon::new(ring(&p.exterior), p.interiors.iter().map(ring).collect());
        match self {
            Geometry::Point(p) => Geometry::Point(c(p)),
            Geometry::LineString(cs) => Geometry::LineString(ring(cs)),
            Geometry::Polygon(p) => Geometry::Polygon(poly(p)),
            Geometry::MultiPolygon(ps) => Geometry::MultiPolygon(ps.iter().map(poly).collect()),
        }
    }
}

fn write_coords<T: Scalar>(f: &mut fmt::Formatter<'_>, cs: &[Coord<T>]) -> fmt::Result {
    f.write_str("(")?;
    for (i, c) in cs.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{} {}", c.lon, c.lat)?;
    }
    f.write_str(")")
}

fn write_polygon<T: Scalar>(f: &mut fmt::Formatter<'_>, p: &Polygon<T>) -> fmt::Result {
    f.write_str("(")?;
    for (i, r) in p.rings().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write_coords(f, r)?;
    }
    f.write_str(")")
}

impl<T: Scalar> fmt::Display for Geometry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.kind().wkt_tag())?;
        match self {
            Geometry::Point(c) => write!(f, "({} {})", c.lon, c.lat),
            Geometry::LineString(cs) => write_coords(f, cs),
            Geometry::Polygon(p) => write_polygon(f, p),
            Geometry::MultiPolygon(ps) => {
                f.write_str("(")?;
                for (i, p) in ps.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write_polygon(f, p)?;
                }
                f.write_str(")")
            }
        }
    }
}
