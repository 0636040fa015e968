#![allow(dead_code)]

use geoqa_core::analyzer::FilterResult;
use geoqa_core::geometry::{relate, SpatialOpSpec, SpatialType};
use geoqa_core::{Coord, EntityKey, GeoSet, Geometry, Polygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const LON: (f64, f64) = (11.50, 11.62);
pub const LAT: (f64, f64) = (48.10, 48.20);

fn round9(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

fn coord(rng: &mut ChaCha8Rng) -> Coord {
    Coord::new(round9(rng.random_range(LON.0..LON.1)), round9(rng.random_range(LAT.0..LAT.1)))
}

fn rect_around(c: Coord, w: f64, h: f64) -> Polygon {
    let ring = vec![
        Coord::new(c.lon, c.lat),
        Coord::new(round9(c.lon + w), c.lat),
        Coord::new(round9(c.lon + w), round9(c.lat + h)),
        Coord::new(c.lon, round9(c.lat + h)),
        Coord::new(c.lon, c.lat),
    ];
    Polygon::new(ring, vec![])
}

/// A random point, line, polygon (some with a hole) or two-part multipolygon
/// a few hundred meters across.
pub fn random_geometry(rng: &mut ChaCha8Rng) -> Geometry {
    let c = coord(rng);
    let size = |rng: &mut ChaCha8Rng| round9(rng.random_range(0.0005..0.01));
    match rng.random_range(0..5) {
        0 => Geometry::Point(c),
        1 => {
            let n = rng.random_range(2..5);
            let mut pts = vec![c];
            for _ in 1..n {
                let last = *pts.last().unwrap();
                pts.push(Coord::new(
                    round9(last.lon + rng.random_range(-0.006..0.006)),
                    round9(last.lat + rng.random_range(-0.004..0.004)),
                ));
            }
            Geometry::LineString(pts)
        }
        2 => Geometry::Polygon(rect_around(c, size(rng), size(rng))),
        3 => {
            let (w, h) = (size(rng), size(rng));
            let outer = rect_around(c, w, h);
            let hole = rect_around(Coord::new(round9(c.lon + w / 4.0), round9(c.lat + h / 4.0)), w / 2.0, h / 2.0);
            Geometry::Polygon(Polygon::new(outer.exterior, vec![hole.exterior]))
        }
        _ => {
            let a = rect_around(c, size(rng), size(rng));
            let b = rect_around(coord(rng), size(rng), size(rng));
            Geometry::MultiPolygon(vec![a, b])
        }
    }
}

pub fn random_set(rng: &mut ChaCha8Rng, n: usize, tag: &str) -> GeoSet {
    (0..n)
        .map(|i| (EntityKey::new("test", tag, format!("{tag} {i}"), i.to_string()).unwrap(), random_geometry(rng)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_op(rng: &mut ChaCha8Rng) -> SpatialOpSpec {
    let t = SpatialType::ALL[rng.random_range(0..4)];
    let op = if t == SpatialType::Buffer {
        SpatialOpSpec::buffer(rng.random_range(10.0..800.0))
    } else {
        SpatialOpSpec::of(t)
    };
    if rng.random_bool(0.5) {
        op.negated()
    } else {
        op
    }
}

/// All-pairs evaluation of a filter without any index.
pub fn naive_filter(spec: &SpatialOpSpec, subject: &GeoSet, object: &GeoSet) -> FilterResult {
    let plain = SpatialOpSpec { negation: false, ..*spec };
    let mut keep_s = Vec::new();
    let mut keep_o = vec![false; object.len()];
    for (_, s) in subject.iter() {
        let mut any = false;
        for (oi, (_, o)) in object.iter().enumerate() {
            if relate(s, o, &plain).unwrap() {
                any = true;
                keep_o[oi] = true;
            }
        }
        keep_s.push(any != spec.negation);
    }
    let subject_out = subject.select_positions(&keep_s);
    let object_out = match (spec.negation, subject_out.is_empty()) {
        (true, true) => GeoSet::new(),
        (true, false) => object.clone(),
        (false, _) => object.select_positions(&keep_o),
    };
    FilterResult { subject: subject_out, object: object_out }
}
