use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use geoqa_core::agent::TokenUsage;
use geoqa_core::engine::{Engine, ResponseKind};

use crate::case::EvalCase;

/// Set-comparison scores of one case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

impl Metrics {
    /// Precision is 1 when nothing was retrieved and nothing was expected,
    /// and 0 when nothing was retrieved but something was.
    pub fn of(retrieved: &BTreeSet<String>, truth: &BTreeSet<String>) -> Self {
        let hit = retrieved.intersection(truth).count() as f64;
        let precision = match (retrieved.is_empty(), truth.is_empty()) {
            (true, true) => 1.0,
            (true, false) => 0.0,
            _ => hit / retrieved.len() as f64,
        };
        let recall = if truth.is_empty() { 1.0 } else { hit / truth.len() as f64 };
        Self { precision, recall, accuracy: if retrieved == truth { 1.0 } else { 0.0 } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub tier: u8,
    pub nl_query: String,
    pub retrieved: BTreeSet<String>,
    pub truth: BTreeSet<String>,
    pub metrics: Metrics,
    pub usage: TokenUsage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CaseOutcome {
    pub fn new(case: &EvalCase, retrieved: BTreeSet<String>, usage: TokenUsage, error: Option<String>) -> Self {
        Self {
            tier: case.tier,
            nl_query: case.nl_query.clone(),
            metrics: Metrics::of(&retrieved, &case.truth_keys),
            truth: case.truth_keys.clone(),
            retrieved,
            usage,
            error,
        }
    }
}

/// Averages over the cases of one tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub tier: u8,
    pub cases: usize,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub tokens_in: f64,
    pub tokens_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub tiers: Vec<TierReport>,
    pub outcomes: Vec<CaseOutcome>,
}

impl Report {
    pub fn from_outcomes(outcomes: Vec<CaseOutcome>) -> Self {
        let mut by_tier: BTreeMap<u8, Vec<&CaseOutcome>> = BTreeMap::new();
        for o in &outcomes {
            by_tier.entry(o.tier).or_default().push(o);
        }
        let tiers = by_tier
            .into_iter()
            .map(|(tier, v)| {
                let n = v.len() as f64;
                let mean = |f: &dyn Fn(&CaseOutcome) -> f64| v.iter().map(|o| f(o)).sum::<f64>() / n;
                TierReport {
                    tier,
                    cases: v.len(),
                    precision: mean(&|o| o.metrics.precision),
                    recall: mean(&|o| o.metrics.recall),
                    accuracy: mean(&|o| o.metrics.accuracy),
                    tokens_in: mean(&|o| o.usage.input_tokens as f64),
                    tokens_out: mean(&|o| o.usage.output_tokens as f64),
                }
            })
            .collect();
        Self { tiers, outcomes }
    }

    pub fn tier(&self, tier: u8) -> Option<&TierReport> {
        self.tiers.iter().find(|t| t.tier == tier)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<5} {:>6} {:>10} {:>8} {:>9} {:>10} {:>11}", "Tier", "Cases", "Precision", "Recall", "Accuracy", "Tokens in", "Tokens out")?;
        for t in &self.tiers {
            writeln!(
                f,
                "{:<5} {:>6} {:>9.1}% {:>7.1}% {:>8.1}% {:>10.0} {:>11.0}",
                t.tier,
                t.cases,
                t.precision * 100.0,
                t.recall * 100.0,
                t.accuracy * 100.0,
                t.tokens_in,
                t.tokens_out
            )?;
        }
        Ok(())
    }
}

/// Runs every case end to end in its own session and scores the final
/// result keys. A failed case scores as an empty retrieval.
pub fn evaluate(engine: &Engine, cases: &[EvalCase]) -> Report {
    let outcomes = cases
        .iter()
        .enumerate()
        .map(|(i, case)| {
            let session = format!("eval-{i}-{}", case.tier);
            match engine.query(&session, &case.nl_query) {
                Ok(resp) => {
                    let keys: BTreeSet<String> = resp.result_keys.clone().unwrap_or_default().into_iter().collect();
                    let error = (resp.kind == ResponseKind::Error).then(|| resp.message.clone());
                    CaseOutcome::new(case, keys, resp.usage, error)
                }
                Err(e) => {
                    let usage = engine.gateway().usage_report(&session).unwrap_or_default();
                    CaseOutcome::new(case, BTreeSet::new(), usage, Some(e.to_string()))
                }
            }
        })
        .collect();
    Report::from_outcomes(outcomes)
}
