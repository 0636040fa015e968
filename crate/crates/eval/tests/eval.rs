use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use serde_json::json;

use geoqa_core::agent::{Gateway, RetryPolicy};
use geoqa_core::analyzer::geo_filter;
use geoqa_core::engine::{Engine, EngineConfig};
use geoqa_core::fixtures;
use geoqa_core::geometry::SpatialOpSpec;
use geoqa_core::retriever::{EntityRetriever, RetrieverConfig};
use geoqa_core::store::{KnowledgeStore, Selector, TrigramEmbedder};
use geoqa_core::GeoSet;
use geoqa_eval::{
    evaluate, generate_cases, keyword_suite, paraphrase_template, run_keyword_suite, tier_config, CaseRelation,
    EntitySpec, EvalCase, EvalError, GenConfig, Metrics, OracleAgent,
};

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

fn entity_set(store: &KnowledgeStore, e: &EntitySpec) -> GeoSet {
    let mut sel = Selector::table(&e.table);
    if let Some(c) = &e.category {
        sel = sel.category(c);
    }
    if let Some(n) = &e.name {
        sel = sel.names([n.as_str()]);
    }
    store.get_geometries(&sel, None).unwrap()
}

/// Truth through the indexed filter, chained on the subject side.
fn filtered_truth(store: &KnowledgeStore, case: &EvalCase) -> BTreeSet<String> {
    let mut subject = entity_set(store, &case.entities[0]);
    for rel in &case.relations {
        if subject.is_empty() {
            break;
        }
        subject = geo_filter(&rel.op, &subject, &entity_set(store, &case.entities[rel.object])).unwrap().subject;
    }
    subject.keys().map(|k| k.to_string()).collect()
}

#[test]
fn generated_cases_are_deterministic_and_valid() {
    let store = fixtures::city_store();
    for tier in 1..=4u8 {
        let config = tier_config(tier, 8, 11 + tier as u64).unwrap();
        let a = generate_cases(&store, &config).unwrap();
        let b = generate_cases(&store, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        for case in &a {
            assert_eq!(case.tier, tier);
            assert_eq!(case.entities.len(), config.n_entities);
            assert!(!case.truth_keys.is_empty());
            assert_eq!(case.truth_keys, filtered_truth(&store, case), "{}", case.nl_query);
            if tier >= 2 {
                assert!(case.entities.iter().all(|e| e.name.is_some()));
            }
        }
    }
    assert!(tier_config(5, 1, 0).is_none());
}

#[test]
fn template_wording() {
    let case = EvalCase {
        tier: 1,
        entities: vec![
            EntitySpec { table: "points".into(), category: Some("clothes shop".into()), name: None },
            EntitySpec { table: "roads".into(), category: Some("tertiary".into()), name: Some("Westendstraße".into()) },
        ],
        relations: vec![CaseRelation { subject: 0, object: 1, op: SpatialOpSpec::buffer(500.0) }],
        nl_query: String::new(),
        truth_keys: BTreeSet::new(),
    };
    assert_eq!(paraphrase_template(&case), "clothes shops within 500 meters of the tertiary road named Westendstraße");
}

#[test]
fn config_errors() {
    let store = fixtures::city_store();
    let bad = GenConfig { n_entities: 1, named: false, count: 3, seed: 0 };
    assert!(matches!(generate_cases(&store, &bad), Err(EvalError::InvalidConfig(_))));

    let tiny = KnowledgeStore::new(Arc::new(TrigramEmbedder));
    let doc = json!({"type": "FeatureCollection", "features": [
        {"type": "Feature", "properties": {"osm_id": "1", "fclass": "cafe", "name": "A"},
         "geometry": {"type": "Point", "coordinates": [11.57, 48.15]}},
        {"type": "Feature", "properties": {"osm_id": "2", "fclass": "bank", "name": "B"},
         "geometry": {"type": "Point", "coordinates": [11.5701, 48.1501]}}]});
    tiny.ingest_geojson("poi", Some("points"), &doc).unwrap();
    let config = tier_config(3, 5, 1).unwrap();
    assert!(matches!(generate_cases(&tiny, &config), Err(EvalError::InsufficientData { wanted: 5, .. })));
}

#[test]
fn hand_checked_metrics() {
    // (retrieved, truth, precision, recall, accuracy), worked out by hand.
    let rows: [(&[&str], &[&str], f64, f64, f64); 10] = [
        (&["a", "b"], &["a", "b"], 1.0, 1.0, 1.0),
        (&["a"], &["a", "b"], 1.0, 0.5, 0.0),
        (&["a", "b"], &["a"], 0.5, 1.0, 0.0),
        (&["c"], &["a", "b"], 0.0, 0.0, 0.0),
        (&[], &["a"], 0.0, 0.0, 0.0),
        (&[], &[], 1.0, 1.0, 1.0),
        (&["a", "b", "c", "d"], &["a"], 0.25, 1.0, 0.0),
        (&["a", "x", "y"], &["a", "b", "c", "d"], 1.0 / 3.0, 0.25, 0.0),
        (&["a", "b", "c"], &["b", "c", "d"], 2.0 / 3.0, 2.0 / 3.0, 0.0),
        (&["x"], &[], 0.0, 1.0, 0.0),
    ];
    for (r, t, p, rc, acc) in rows {
        let m = Metrics::of(&set(r), &set(t));
        assert_eq!(m, Metrics { precision: p, recall: rc, accuracy: acc }, "{r:?} vs {t:?}");
    }
}

#[test]
fn oracle_agent_scores_perfectly() {
    let store = fixtures::city_store();
    let mut cases = Vec::new();
    for tier in 1..=4u8 {
        cases.extend(generate_cases(&store, &tier_config(tier, 4, 100 + tier as u64).unwrap()).unwrap());
    }
    let gateway = Gateway::new(Arc::new(OracleAgent::new(&cases)), RetryPolicy::none());
    let engine = Engine::new(Arc::new(gateway), store.clone(), Box::new(fixtures::geocoder()), EngineConfig::default());
    let report = evaluate(&engine, &cases);
    assert_eq!(report.tiers.len(), 4);
    for t in &report.tiers {
        assert_eq!((t.cases, t.precision, t.recall, t.accuracy), (4, 1.0, 1.0, 1.0), "tier {}", t.tier);
        assert!(t.tokens_in > 0.0);
    }
}

#[test]
fn keyword_suite_is_exact() {
    let store = fixtures::city_store();
    let queries = keyword_suite(&store, 100, 7).unwrap();
    assert_eq!(queries.len(), 100);
    assert_eq!(queries, keyword_suite(&store, 100, 7).unwrap());
    let retriever = EntityRetriever::new(store, RetrieverConfig::default());
    let report = run_keyword_suite(&retriever, &queries);
    let t = report.tier(0).unwrap();
    assert_eq!((t.cases, t.precision, t.recall), (100, 1.0, 1.0));
}

proptest! {
    #[test]
    fn metrics_ignore_order(
        retrieved in prop::collection::vec("[a-f]", 0..8),
        truth in prop::collection::vec("[a-f]", 0..8),
        seed in any::<u64>(),
    ) {
        let base = Metrics::of(&retrieved.iter().cloned().collect(), &truth.iter().cloned().collect());
        let mut r = retrieved.clone();
        let mut t = truth.clone();
        let n = r.len().max(1);
        r.rotate_left((seed as usize) % n);
        t.reverse();
        let m = Metrics::of(&r.into_iter().collect(), &t.into_iter().collect());
        prop_assert_eq!(m, base);
        prop_assert!((0.0..=1.0).contains(&m.precision) && (0.0..=1.0).contains(&m.recall));
        prop_assert_eq!(m.accuracy == 1.0, m.precision == 1.0 && m.recall == 1.0);
    }
}
