use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Coord, Geometry};
use crate::scalar::Scalar;

/// Axis-aligned lat/lon rectangle. Serialized as `[min_lat, max_lat, min_lon, max_lon]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub min_lat: T,
    pub max_lat: T,
    pub min_lon: T,
    pub max_lon: T,
}

impl<T: Scalar> BoundingBox<T> {
    /// Validated constructor; `None` when ordering or WGS84 ranges are violated.
    pub fn new(min_lat: T, max_lat: T, min_lon: T, max_lon: T) -> Option<Self> {
        let b = Self { min_lat, max_lat, min_lon, max_lon };
        b.is_valid().then_some(b)
    }

    pub fn from_array(v: [T; 4]) -> Option<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn to_array(&self) -> [T; 4] {
        [self.min_lat, self.max_lat, self.min_lon, self.max_lon]
    }

    pub fn world() -> Self {
        Self {
            min_lat: T::lit(-90.0),
            max_lat: T::lit(90.0),
            min_lon: T::lit(-180.0),
            max_lon: T::lit(180.0),
        }
    }

    pub(crate) fn degenerate(c: Coord<T>) -> Self {
        Self { min_lat: c.lat, max_lat: c.lat, min_lon: c.lon, max_lon: c.lon }
    }

    pub(crate) fn extend(&mut self, c: Coord<T>) {
        self.min_lat = self.min_lat.min(c.lat);
        self.max_lat = self.max_lat.max(c.lat);
        self.min_lon = self.min_lon.min(c.lon);
        self.max_lon = self.max_lon.max(c.lon);
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min_lat: self.min_lat.min(other.min_lat),
            max_lat: self.max_lat.max(other.max_lat),
            min_lon: self.min_lon.min(other.min_lon),
            max_lon: self.max_lon.max(other.max_lon),
        }
    }

    pub fn is_valid(&self) -> bool {
        let lat_ok = |v: T| v >= T::lit(-90.0) && v <= T::lit(90.0);
        let lon_ok = |v: T| v >= T::lit(-180.0) && v <= T::lit(180.0);
        self.min_lat <= self.max_lat
            && self.min_lon <= self.max_lon
            && lat_ok(self.min_lat)
            && lat_ok(self.max_lat)
            && lon_ok(self.min_lon)
            && lon_ok(self.max_lon)
    }

    /// Closed-interval overlap test.
    pub fn intersects(&self, other: &Self) -> bool {
        self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
            && self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
    }

    pub fn contains_coord(&self, c: Coord<T>) -> bool {
        c.lat >= self.min_lat && c.lat <= self.max_lat && c.lon >= self.min_lon && c.lon <= self.max_lon
    }

    pub fn center(&self) -> Coord<T> {
        let two = T::lit(2.0);
        Coord::new((self.min_lon + self.max_lon) / two, (self.min_lat + self.max_lat) / two)
    }

    pub fn lat_extent(&self) -> T {
        self.max_lat - self.min_lat
    }

    pub fn lon_extent(&self) -> T {
        self.max_lon - self.min_lon
    }

    /// Area in square degrees.
    pub fn area_deg2(&self) -> T {
        self.lat_extent() * self.lon_extent()
    }

    /// Grows the box by the given margins (degrees), clamped to WGS84.
    pub fn expanded(&self, dlat: T, dlon: T) -> Self {
        Self {
            min_lat: (self.min_lat - dlat).max(T::lit(-90.0)),
            max_lat: (self.max_lat + dlat).min(T::lit(90.0)),
            min_lon: (self.min_lon - dlon).max(T::lit(-180.0)),
            max_lon: (self.max_lon + dlon).min(T::lit(180.0)),
        }
    }

    pub fn to_geometry(&self) -> Geometry<T> {
        Geometry::rect(self.min_lon, self.min_lat, self.max_lon, self.max_lat)
    }

    pub fn to_wkt(&self) -> String {
        self.to_geometry().to_wkt()
    }

    /// Rounds every bound to a 1e-6 degree grid, as an integer key.
    pub fn grid_key(&self) -> [i64; 4] {
        self.to_array().map(|v| (v.to_f64_lossy() * 1e6).round() as i64)
    }
}

impl<T: Scalar + Serialize> Serialize for BoundingBox<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for BoundingBox<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = <[T; 4]>::deserialize(d)?;
        Self::from_array(v).ok_or_else(|| D::Error::custom("invalid bounding box"))
    }
}
