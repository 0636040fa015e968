use indexmap::IndexMap;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{parse_wkt, BoundingBox, EntityKey, Geometry};
use crate::scalar::Scalar;

/// Insertion-ordered, key-unique collection of geometries. Every pipeline
/// stage consumes and produces these.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoSet<T> {
    items: IndexMap<EntityKey, Geometry<T>>,
}

impl<T> Default for GeoSet<T> {
    fn default() -> Self {
        Self { items: IndexMap::new() }
    }
}

impl<T: Scalar> GeoSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces; a replaced key keeps its original position.
    pub fn insert(&mut self, key: EntityKey, geometry: Geometry<T>) -> Option<Geometry<T>> {
        self.items.insert(key, geometry)
    }

    pub fn get(&self, key: &EntityKey) -> Option<&Geometry<T>> {
        self.items.get(key)
    }

    pub fn contains_key(&self, key: &EntityKey) -> bool {
        self.items.contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityKey, &Geometry<T>)> {
        self.items.iter()
    }

    pub fn keys(&self) -> impl Iterator<Item = &EntityKey> {
        self.items.keys()
    }

    pub fn geometries(&self) -> impl Iterator<Item = &Geometry<T>> {
        self.items.values()
    }

    pub fn get_index(&self, i: usize) -> Option<(&EntityKey, &Geometry<T>)> {
        self.items.get_index(i)
    }

    /// Keeps the entries at the given positions, in original order.
    pub fn select_positions(&self, keep: &[bool]) -> Self {
        let items = self
            .items
            .iter()
            .zip(keep)
            .filter(|(_, k)| **k)
            .map(|((key, g), _)| (key.clone(), g.clone()))
            .collect();
        Self { items }
    }

    /// Entries whose bounding box intersects `bbox`, order preserved.
    pub fn bbox_filter(&self, bbox: &BoundingBox<T>) -> Self {
        let items = self
            .items
            .iter()
            .filter(|(_, g)| g.bbox().intersects(bbox))
            .map(|(k, g)| (k.clone(), g.clone()))
            .collect();
        Self { items }
    }

    /// Appends entries of `other` whose keys are not yet present.
    pub fn extend_unique(&mut self, other: &GeoSet<T>) {
        for (k, g) in other.iter() {
            if !self.items.contains_key(k) {
                self.items.insert(k.clone(), g.clone());
            }
        }
    }

    pub fn extent(&self) -> Option<BoundingBox<T>> {
        self.items.values().map(Geometry::bbox).reduce(|a, b| a.union(&b))
    }
}

impl<T: Scalar> FromIterator<(EntityKey, Geometry<T>)> for GeoSet<T> {
    fn from_iter<I: IntoIterator<Item = (EntityKey, Geometry<T>)>>(iter: I) -> Self {
        Self { items: iter.into_iter().collect() }
    }
}

impl<T: Scalar> Serialize for GeoSet<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_map(self.items.iter().map(|(k, g)| (k.to_string(), g.to_wkt())))
    }
}

impl<'de, T: Scalar> Deserialize<'de> for GeoSet<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = IndexMap::<EntityKey, String>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, wkt)| parse_wkt(&wkt).map(|g| (k, g)).map_err(D::Error::custom))
            .collect()
    }
}
