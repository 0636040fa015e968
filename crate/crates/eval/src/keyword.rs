use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use geoqa_core::agent::{Gateway, RetryPolicy, ScriptedBackend, Transcript};
use geoqa_core::retriever::EntityRetriever;
use geoqa_core::store::KnowledgeStore;
use geoqa_core::text::singular_tokens;

use crate::metrics::{CaseOutcome, Report};
use crate::case::EvalCase;
use crate::EvalError;

/// A query whose text is literally one stored table, category or name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordQuery {
    pub text: String,
    pub truth_keys: BTreeSet<String>,
}

/// `n` distinct keyword queries drawn with a seed. Truth is every row whose
/// table, category or name reads the same as the query after
/// normalization, found by scanning rows rather than the keyword index.
pub fn keyword_suite(store: &KnowledgeStore, n: usize, seed: u64) -> Result<Vec<KeywordQuery>, EvalError> {
    let state = store.snapshot();
    let mut terms = BTreeSet::new();
    for t in state.tables() {
        terms.insert(t.name.clone());
        for r in &t.rows {
            terms.extend(r.category.iter().cloned());
            if !r.name.is_empty() {
                terms.insert(r.name.clone());
            }
        }
    }
    let terms: Vec<String> = terms.into_iter().filter(|t| !singular_tokens(t).is_empty()).collect();
    if terms.len() < n {
        return Err(EvalError::InsufficientData { wanted: n, found: terms.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<&String> = terms.choose_multiple(&mut rng, n).collect();
    Ok(picked
        .into_iter()
        .map(|text| {
            let q = singular_tokens(text);
            let same = |s: &str| singular_tokens(s) == q;
            let truth_keys = state
                .tables()
                .flat_map(|t| {
                    let whole = same(&t.name);
                    t.rows
                        .iter()
                        .filter(move |r| whole || r.category.as_deref().is_some_and(same) || same(&r.name))
                })
                .map(|r| r.key.to_string())
                .collect();
            KeywordQuery { text: text.clone(), truth_keys }
        })
        .collect())
}

/// Retrieves every query with no agent available: exact keyword hits must
/// never reach an agent, so a miss surfaces as an error outcome.
pub fn run_keyword_suite(retriever: &EntityRetriever, queries: &[KeywordQuery]) -> Report {
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(Transcript::new())), RetryPolicy::none());
    let outcomes = queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let session = format!("keyword-{i}");
            gateway.open_session(&session);
            let case = EvalCase {
                tier: 0,
                entities: Vec::new(),
                relations: Vec::new(),
                nl_query: q.text.clone(),
                truth_keys: q.truth_keys.clone(),
            };
            let usage = || gateway.usage_report(&session).unwrap_or_default();
            match retriever.retrieve(&gateway, &session, &q.text, None) {
                Ok(r) => {
                    let keys = r.geometries.keys().map(|k| k.to_string()).collect();
                    CaseOutcome::new(&case, keys, usage(), None)
                }
                Err(e) => CaseOutcome::new(&case, BTreeSet::new(), usage(), Some(e.to_string())),
            }
        })
        .collect();
    Report::from_outcomes(outcomes)
}
