//! Natural-language question answering over geospatial tables.
//!
//! Geometry types are generic over [`Scalar`]; the aliases below fix them to
//! `f64`, which is what the store, agents and service use.

pub mod agent;
pub mod analyzer;
pub mod engine;
pub mod explainer;
pub mod fixtures;
pub mod geometry;
pub mod planner;
pub mod region;
pub mod retriever;
pub mod scalar;
pub mod session;
pub mod store;
pub mod text;

pub use scalar::Scalar;

pub type Coord = geometry::Coord<f64>;
pub type Polygon = geometry::Polygon<f64>;
pub type Geometry = geometry::Geometry<f64>;
pub type BoundingBox = geometry::BoundingBox<f64>;
pub type GeoSet = geometry::GeoSet<f64>;
pub type SpatialIndex = geometry::SpatialIndex<f64>;
pub use geometry::EntityKey;
