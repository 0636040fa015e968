use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;

use geoqa_core::agent::{Gateway, RetryPolicy, ScriptedBackend};
use geoqa_core::fixtures;
use geoqa_core::region::{modify_bbox, Cut, Directive, RegionError, RegionSelector};
use geoqa_core::BoundingBox;

const MAXVORSTADT: [f64; 4] = [48.139603, 48.157637, 11.538923, 11.588192];

fn close(a: [f64; 4], b: [f64; 4], tol: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn selector() -> (RegionSelector, Gateway) {
    let g = Gateway::new(Arc::new(ScriptedBackend::new(fixtures::transcript().unwrap())), RetryPolicy::none());
    g.open_session("s");
    (RegionSelector::new(Box::new(fixtures::geocoder())), g)
}

#[test]
fn geocodes_maxvorstadt() {
    let (r, _) = selector();
    let hit = r.geocode("Munich Maxvorstadt").unwrap();
    assert_eq!(hit.bounding_box.to_array(), MAXVORSTADT);
    assert!(matches!(r.geocode("Zzqxv Nowhere"), Err(RegionError::PlaceNotFound(_))));
}

#[test]
fn south_of_maxvorstadt() {
    let (r, g) = selector();
    let mut cache = HashMap::new();
    let b = r.resolve_region(&g, "s", "south of Maxvorstadt", &mut cache).unwrap().unwrap();
    assert!(close(b.to_array(), [48.139603, 48.148620, 11.538923, 11.588192], 1e-6), "{:?}", b.to_array());
    // Second lookup is served from the cache without another agent call.
    r.resolve_region(&g, "s", "south  of maxvorstadt", &mut cache).unwrap();
    assert_eq!(g.calls("s").unwrap().len(), 1);
    assert_eq!(r.resolve_region(&g, "s", "  ", &mut cache).unwrap(), None);
}

#[test]
fn degenerate_boxes_are_rejected() {
    let b = BoundingBox::from_array([0.0, 1e-300, 0.0, 1.0]).unwrap();
    let d = Directive { scale: Some(1e-30), ..Directive::place("x") };
    assert_eq!(modify_bbox(&b, &d), Err(RegionError::DegenerateBox));
}

fn bbox() -> impl Strategy<Value = BoundingBox> {
    (-80.0f64..79.0, 0.001f64..1.0, -170.0f64..169.0, 0.001f64..1.0)
        .prop_map(|(lat, h, lon, w)| BoundingBox::new(lat, lat + h, lon, lon + w).unwrap())
}

fn cut() -> impl Strategy<Value = Cut> {
    prop_oneof![Just(Cut::North), Just(Cut::South), Just(Cut::East), Just(Cut::West), Just(Cut::Central)]
}

proptest! {
    #[test]
    fn cuts_stay_inside_and_shrink(b in bbox(), c in cut()) {
        let [a0, a1, a2, a3] = b.to_array();
        let [b0, b1, b2, b3] = modify_bbox(&b, &Directive { cut: Some(c), ..Directive::place("x") }).unwrap().to_array();
        prop_assert!(a0 <= b0 && b1 <= a1 && a2 <= b2 && b3 <= a3);
        let ratio = (b1 - b0) * (b3 - b2) / ((a1 - a0) * (a3 - a2));
        let want = if c == Cut::Central { 0.25 } else { 0.5 };
        prop_assert!((ratio - want).abs() < 1e-6, "{ratio}");
    }

    #[test]
    fn scale_keeps_center(b in bbox(), s in 0.1f64..3.0) {
        let [a0, a1, a2, a3] = b.to_array();
        let [b0, b1, b2, b3] = modify_bbox(&b, &Directive { scale: Some(s), ..Directive::place("x") }).unwrap().to_array();
        prop_assert!(((a0 + a1) - (b0 + b1)).abs() < 1e-9);
        prop_assert!(((a2 + a3) - (b2 + b3)).abs() < 1e-9);
        prop_assert!(((b1 - b0) - s * (a1 - a0)).abs() < 1e-9);
        prop_assert!(((b3 - b2) - s * (a3 - a2)).abs() < 1e-9);
    }
}
