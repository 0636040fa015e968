mod common;

use std::collections::HashMap;
use std::time::Instant;

use geoqa_core::agent::TokenUsage;
use geoqa_core::engine::{Engine, ResponseKind};
use geoqa_core::explainer::{sturges_bins, ChartSpec};
use geoqa_core::fixtures;
use geoqa_core::geometry::SpatialOpSpec;
use geoqa_core::store::Selector;
use geoqa_core::BoundingBox;

const WORKED: &str = "Buildings within 100 meters of the parks in Munich Maxvorstadt";

fn maxvorstadt() -> BoundingBox {
    BoundingBox::from_array([48.139603, 48.157637, 11.538923, 11.588192]).unwrap()
}

/// Sum of the scripted usage of every call made in `session`.
fn scripted_usage(engine: &Engine, session: &str) -> TokenUsage {
    let t = fixtures::transcript().unwrap();
    engine
        .gateway()
        .calls(session)
        .unwrap()
        .iter()
        .map(|c| t.get(c.role, &c.input_digest).expect("call was scripted").usage)
        .sum()
}

#[test]
fn worked_example_matches_all_pairs_oracle() {
    let engine = fixtures::engine();
    let start = Instant::now();
    let r = engine.query("a", WORKED).unwrap();
    assert!(start.elapsed().as_secs_f64() < 5.0);
    assert_eq!(r.kind, ResponseKind::Layers);
    let steps: Vec<&str> = r.steps.as_ref().unwrap().iter().map(|s| s.description.as_str()).collect();
    assert_eq!(steps.len(), 5);

    let store = engine.store();
    let bbox = maxvorstadt();
    let buildings = store.get_geometries(&Selector::table("buildings"), Some(&bbox)).unwrap();
    let parks = store.get_geometries(&Selector::table("area").category("park"), Some(&bbox)).unwrap();
    let oracle = common::naive_filter(&SpatialOpSpec::buffer(100.0), &buildings, &parks);
    let want: Vec<String> = oracle.subject.keys().map(|k| k.to_string()).collect();
    assert!(!want.is_empty() && want.len() < buildings.len());
    assert_eq!(r.result_keys.as_deref(), Some(want.as_slice()));

    assert_eq!(r.usage, scripted_usage(&engine, "a"));
    assert_eq!(engine.gateway().usage_report("a").unwrap(), r.usage);
}

#[test]
fn step_snapshots_are_retrievable() {
    let engine = fixtures::engine();
    let r = engine.query("a", WORKED).unwrap();
    for (i, s) in r.steps.unwrap().iter().enumerate() {
        let snap = engine.step(&s.step_id).unwrap();
        assert_eq!((snap.index, &snap.description), (i + 1, &s.description));
    }
    assert!(engine.step("no-such-step").is_none());
    let op = engine.with_session("a", |st| st.steps.values().find_map(|s| s.operation)).unwrap();
    assert_eq!(op, Some(SpatialOpSpec::buffer(100.0)));
}

fn oracle_chart(engine: &Engine) -> Vec<u64> {
    let set = engine
        .store()
        .get_geometries(&Selector::table("buildings"), Some(&maxvorstadt()))
        .unwrap();
    let areas: Vec<f64> = set.geometries().map(|g| g.area_m2()).collect();
    let (lo, hi) = areas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let k = sturges_bins(areas.len());
    let mut counts = vec![0u64; k];
    for v in areas {
        counts[(((v - lo) / (hi - lo) * k as f64) as usize).min(k - 1)] += 1;
    }
    counts
}

#[test]
fn follow_up_chart_uses_session_results() {
    let engine = fixtures::engine();
    let first = engine.query("c", "all buildings in Maxvorstadt").unwrap();
    assert_eq!(first.kind, ResponseKind::Layers);
    let r = engine.query("c", "Can you draw me a diagram for area distribution of buildings you searched?").unwrap();
    assert_eq!(r.kind, ResponseKind::Chart);
    let chart: ChartSpec = r.chart.unwrap();
    assert_eq!(chart.counts, oracle_chart(&engine));
    assert_eq!(chart.counts, [7, 20, 8, 8, 6, 0, 3]);
    assert_eq!(chart.counts.iter().sum::<u64>() as usize, first.result_keys.unwrap().len());
    assert_eq!(chart.bin_edges.len(), 8);
    assert_eq!(first.usage + r.usage, scripted_usage(&engine, "c"));
}

#[test]
fn chart_without_results_is_not_a_crash() {
    let engine = fixtures::engine();
    let r = engine.query("d", "Can you draw me a diagram for area distribution of buildings you searched?");
    // Unscripted in a fresh session: the transcript has no matching explainer turn.
    assert!(r.is_err() || r.unwrap().kind != ResponseKind::Chart);
}

#[test]
fn failing_step_keeps_earlier_steps() {
    let engine = fixtures::engine();
    let r = engine.query("e", "Show qqqq zzzz in Munich").unwrap();
    assert_eq!(r.kind, ResponseKind::Error);
    let steps = r.steps.unwrap();
    assert_eq!(steps.len(), 1);
    assert!(engine.step(&steps[0].step_id).is_some());
    assert!(!r.message.is_empty());
}

#[test]
fn dataset_question_is_answered_in_text() {
    let engine = fixtures::engine();
    let r = engine.query("f", "what are the datasets we have?").unwrap();
    assert_eq!(r.kind, ResponseKind::Text);
    for t in ["soil", "roads", "points", "area", "buildings"] {
        assert!(r.message.contains(t));
    }
    assert_eq!(r.usage, scripted_usage(&engine, "f"));
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let engine = fixtures::engine();
        let mut out = HashMap::new();
        for (s, p) in [("a", WORKED), ("b", "Frauenkirche in Munich Old Town"), ("c", "restaurants in Munich Maxvorstadt")] {
            let r = engine.query(s, p).unwrap();
            out.insert(s, (r.result_keys, r.usage, serde_json::to_string(&r.layers).unwrap()));
        }
        out
    };
    assert_eq!(run(), run());
}
