//! Entity retrieval: keyword match, intent match, similarity match, quality
//! check and imitation rewrite, ending in store queries.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{extract_json, AgentError, AgentRole, Ask, AskError, Gateway};
use crate::store::{Candidate, CandidateMatch, KnowledgeStore, Selector, StoreError, ValueKind, DEFAULT_TOP_K};
use crate::text::collapse_ws;
use crate::{BoundingBox, GeoSet};

#[derive(Debug, Error)]
pub enum RetrieveError {
    #[error("no data matches `{0}`")]
    EntityNotFound(String),
    #[error("malformed {role} decision: {reason}")]
    MalformedDecision { role: AgentRole, reason: String },
    #[error("imitation rewrite returned no text")]
    RewriteFailed,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<AskError<RetrieveError>> for RetrieveError {
    fn from(e: AskError<RetrieveError>) -> Self {
        match e {
            AskError::Agent(a) => a.into(),
            AskError::Content(c) => c,
        }
    }
}

fn malformed(role: AgentRole, reason: impl Into<String>) -> RetrieveError {
    RetrieveError::MalformedDecision { role, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchCase {
    Exact,
    Partial,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub case: MatchCase,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntentDecision {
    pub named_entity: bool,
    pub valid_pairs: Vec<Candidate>,
    pub table: String,
}

impl IntentDecision {
    /// Table that later stages are restricted to: the inferred table, else
    /// the first retained table match.
    pub fn scope(&self) -> Option<&str> {
        if !self.table.is_empty() {
            return Some(&self.table);
        }
        self.valid_pairs.iter().find(|c| c.kind == ValueKind::Table).map(|c| c.table.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewriteRecord {
    pub table: String,
    pub rewrite: String,
    pub matches: Vec<CandidateMatch>,
}

/// Stage-by-stage record of one retrieval. `None` marks a skipped stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub entity_text: String,
    pub schema_match: MatchOutcome,
    pub intent_match: Option<IntentDecision>,
    pub similarity_match: Option<Vec<CandidateMatch>>,
    pub quality_check: Option<Vec<Candidate>>,
    pub imitation_rewrite: Option<RewriteRecord>,
    pub selected: Vec<Candidate>,
}

fn labels<'a>(items: impl IntoIterator<Item = &'a Candidate>) -> String {
    let v: Vec<String> = items.into_iter().map(Candidate::label).collect();
    format!("[{}]", v.join(", "))
}

impl RetrievalTrace {
    /// Plain-text rendering, one line per stage.
    pub fn render(&self) -> String {
        let mut out = format!("Extracted entity: \"{}\"\n", self.entity_text);
        let _ = writeln!(out, "1. Schema Match: Matched candidates: {}", labels(&self.schema_match.candidates));
        let intent = match &self.intent_match {
            None => "-".to_string(),
            Some(d) => {
                let focus = if d.named_entity { "Name-focused Search" } else { "Category-focused Search" };
                if d.valid_pairs.is_empty() {
                    focus.to_string()
                } else {
                    format!("{focus}, Valid matches: {}", labels(&d.valid_pairs))
                }
            }
        };
        let _ = writeln!(out, "2. Intent Match: {intent}");
        let similarity = match &self.similarity_match {
            None => "-".to_string(),
            Some(m) if m.is_empty() => "None".to_string(),
            Some(m) => {
                let c: Vec<Candidate> = m.iter().map(CandidateMatch::candidate).collect();
                format!("Matched: {}", labels(&c))
            }
        };
        let _ = writeln!(out, "3. Similarity Match: {similarity}");
        let quality = match &self.quality_check {
            None => "-".to_string(),
            Some(v) => format!("Valid: {}", labels(v)),
        };
        let _ = writeln!(out, "4. Quality Check: {quality}");
        let rewrite = match &self.imitation_rewrite {
            None => "-".to_string(),
            Some(r) => format!("\"{}\"", r.rewrite),
        };
        let _ = writeln!(out, "5. Imitation Rewrite: {rewrite}");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Retrieval {
    pub geometries: GeoSet,
    pub trace: RetrievalTrace,
    pub cached: bool,
}

/// Tunables of the retrieval workflow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrieverConfig {
    /// Candidates handed to the Quality Checker at most.
    pub top_k: usize,
    /// Scores below this never leave the similarity stage.
    pub floor: f64,
    /// Secondary value kind (categories for name-focused queries and vice
    /// versa) needs at least this score.
    pub secondary_floor: f64,
    pub sample_rows: usize,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        Self { top_k: DEFAULT_TOP_K, floor: 0.2, secondary_floor: 0.5, sample_rows: 20 }
    }
}

type CacheKey = (String, Option<[i64; 4]>);

pub struct EntityRetriever {
    store: Arc<KnowledgeStore>,
    config: RetrieverConfig,
    cache: Mutex<(u64, HashMap<CacheKey, (GeoSet, RetrievalTrace)>)>,
}

impl EntityRetriever {
    pub fn new(store: Arc<KnowledgeStore>, config: RetrieverConfig) -> Self {
        Self { store, config, cache: Mutex::new((0, HashMap::new())) }
    }

    pub fn store(&self) -> &Arc<KnowledgeStore> {
        &self.store
    }

    pub fn config(&self) -> &RetrieverConfig {
        &self.config
    }

    /// Keyword stage: exact when the singularized text equals a schema term,
    /// partial when schema terms occur in it as token runs.
    pub fn initial_match(&self, entity_text: &str) -> MatchOutcome {
        let matches = self.store.keyword_matches(entity_text);
        let exact: Vec<Candidate> = matches.iter().filter(|(_, e)| *e).map(|(c, _)| c.clone()).collect();
        if !exact.is_empty() {
            return MatchOutcome { case: MatchCase::Exact, candidates: exact };
        }
        let mut partial: Vec<Candidate> = Vec::new();
        for (c, _) in matches {
            if !partial.contains(&c) {
                partial.push(c);
            }
        }
        let case = if partial.is_empty() { MatchCase::None } else { MatchCase::Partial };
        MatchOutcome { case, candidates: partial }
    }

    pub fn intent_match(
        &self,
        gateway: &Gateway,
        session: &str,
        entity_text: &str,
        outcome: &MatchOutcome,
    ) -> Result<IntentDecision, RetrieveError> {
        let tables = self.store.table_names();
        let ask = Ask::new(
            AgentRole::IntentMatcher,
            format!("query: {entity_text}\npartial matches: {}", labels(&outcome.candidates)),
        )
        .slot("tables", tables.join(", "));
        let role = AgentRole::IntentMatcher;
        Ok(gateway.ask_parsed(session, &ask, |reply| {
            let v = extract_json(reply).map_err(|e| malformed(role, e.to_string()))?;
            let obj = v.as_object().ok_or_else(|| malformed(role, "expected a JSON object"))?;
            let named_entity = match obj.get("named_entity") {
                Some(Value::Bool(b)) => *b,
                Some(Value::String(s)) if s.eq_ignore_ascii_case("true") => true,
                Some(Value::String(s)) if s.eq_ignore_ascii_case("false") => false,
                _ => return Err(malformed(role, "named_entity must be true or false")),
            };
            let picked = match obj.get("valid_pairs") {
                None | Some(Value::Null) => Vec::new(),
                Some(Value::Array(a)) => a.clone(),
                Some(_) => return Err(malformed(role, "valid_pairs must be a list")),
            };
            let mut valid_pairs = pick(&outcome.candidates, &picked);
            let table = obj.get("table").and_then(Value::as_str).unwrap_or("").trim().to_string();
            // An unknown table name means no table inference.
            let table = if tables.contains(&table) { table } else { String::new() };
            if !table.is_empty() {
                valid_pairs.retain(|c| c.table == table);
            }
            Ok(IntentDecision { named_entity, valid_pairs, table })
        })?)
    }

    /// Vector search restricted to the decision's scope. The primary kind
    /// (names for name-focused queries, categories otherwise) passes the
    /// floor; the other kinds need the secondary floor.
    pub fn similarity_stage(&self, entity_text: &str, decision: &IntentDecision) -> Result<Vec<CandidateMatch>, RetrieveError> {
        self.similarity(entity_text, decision.named_entity, decision.scope())
    }

    fn similarity(&self, text: &str, named: bool, scope: Option<&str>) -> Result<Vec<CandidateMatch>, RetrieveError> {
        let primary = if named { ValueKind::EntryName } else { ValueKind::Category };
        let k = self.config.top_k;
        let all = match self.store.similarity_search(text, usize::MAX, scope, &[]) {
            Err(StoreError::EmptyIndex) => return Ok(Vec::new()),
            other => other?,
        };
        let mut kept: Vec<CandidateMatch> = all
            .into_iter()
            .filter(|m| {
                let floor = if m.kind == primary { self.config.floor } else { self.config.secondary_floor };
                m.score >= floor
            })
            .collect();
        kept.truncate(k);
        Ok(kept)
    }

    pub fn quality_check(
        &self,
        gateway: &Gateway,
        session: &str,
        entity_text: &str,
        candidates: &[Candidate],
    ) -> Result<Vec<Candidate>, RetrieveError> {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let role = AgentRole::QualityChecker;
        let ask = Ask::new(role, format!("query: {entity_text}\ncandidates: {}", labels(candidates)));
        Ok(gateway.ask_parsed(session, &ask, |reply| {
            let v = extract_json(reply).map_err(|e| malformed(role, e.to_string()))?;
            let valid = match v.get("valid") {
                Some(Value::Array(a)) => a.clone(),
                Some(Value::Null) | None if v.is_array() => v.as_array().cloned().unwrap_or_default(),
                _ => return Err(malformed(role, "missing `valid` list")),
            };
            Ok(pick(candidates, &valid))
        })?)
    }

    pub fn imitation_rewrite(
        &self,
        gateway: &Gateway,
        session: &str,
        entity_text: &str,
        table: &str,
    ) -> Result<String, RetrieveError> {
        let mut content = format!("query: {entity_text}\ntable: {table}\nsamples:\n");
        for (category, name) in self.store.sample_rows(table, self.config.sample_rows)? {
            let _ = writeln!(content, "- {category} | {name}");
        }
        let role = AgentRole::ImitationRewriter;
        Ok(gateway.ask_parsed(session, &Ask::new(role, content), |reply| {
            let v = extract_json(reply).map_err(|e| malformed(role, e.to_string()))?;
            v.get("rewrite")
                .and_then(Value::as_str)
                .map(collapse_ws)
                .filter(|s| !s.is_empty())
                .ok_or(RetrieveError::RewriteFailed)
        })?)
    }

    /// Runs the selected candidates against the store, unioned by key in
    /// candidate order. Name-focused queries that kept both categories and
    /// names of one table are read as "names within those categories".
    pub fn generate_query(
        &self,
        candidates: &[Candidate],
        named_entity: bool,
        bbox: Option<&BoundingBox>,
    ) -> Result<GeoSet, RetrieveError> {
        let mut by_table: BTreeMap<&str, (bool, Vec<&str>, Vec<&str>)> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for c in candidates {
            let entry = by_table.entry(&c.table).or_insert_with(|| {
                order.push(&c.table);
                (false, Vec::new(), Vec::new())
            });
            match c.kind {
                ValueKind::Table => entry.0 = true,
                ValueKind::Category => entry.1.push(&c.value),
                ValueKind::EntryName => entry.2.push(&c.value),
            }
        }
        let mut out = GeoSet::new();
        for table in order {
            let (whole, categories, names) = &by_table[table];
            let mut selectors = Vec::new();
            if *whole {
                selectors.push(Selector::table(table));
            } else if named_entity && !categories.is_empty() && !names.is_empty() {
                for c in categories {
                    selectors.push(Selector::table(table).category(*c).names(names.iter().copied()));
                }
            } else {
                for c in categories {
                    selectors.push(Selector::table(table).category(*c));
                }
                if !names.is_empty() {
                    selectors.push(Selector::table(table).names(names.iter().copied()));
                }
            }
            for s in selectors {
                out.extend_unique(&self.store.get_geometries(&s, bbox)?);
            }
        }
        Ok(out)
    }

    /// Full workflow with caching on normalized text and box.
    pub fn retrieve(
        &self,
        gateway: &Gateway,
        session: &str,
        entity_text: &str,
        bbox: Option<&BoundingBox>,
    ) -> Result<Retrieval, RetrieveError> {
        let text = collapse_ws(entity_text);
        let key = (text.to_lowercase(), bbox.map(BoundingBox::grid_key));
        let generation = self.store.generation();
        {
            let mut cache = self.cache.lock().unwrap();
            if cache.0 != generation {
                *cache = (generation, HashMap::new());
            }
            if let Some((geometries, trace)) = cache.1.get(&key) {
                return Ok(Retrieval { geometries: geometries.clone(), trace: trace.clone(), cached: true });
            }
        }
        let (geometries, trace) = self.run(gateway, session, &text, bbox)?;
        let mut cache = self.cache.lock().unwrap();
        if cache.0 == generation {
            cache.1.insert(key, (geometries.clone(), trace.clone()));
        }
        Ok(Retrieval { geometries, trace, cached: false })
    }

    fn run(
        &self,
        gateway: &Gateway,
        session: &str,
        text: &str,
        bbox: Option<&BoundingBox>,
    ) -> Result<(GeoSet, RetrievalTrace), RetrieveError> {
        let schema_match = self.initial_match(text);
        let mut trace = RetrievalTrace {
            entity_text: text.to_string(),
            schema_match: schema_match.clone(),
            intent_match: None,
            similarity_match: None,
            quality_check: None,
            imitation_rewrite: None,
            selected: Vec::new(),
        };
        if schema_match.case == MatchCase::Exact {
            trace.selected = schema_match.candidates.clone();
            let geometries = self.generate_query(&trace.selected, false, bbox)?;
            return Ok((geometries, trace));
        }
        let decision = self.intent_match(gateway, session, text, &schema_match)?;
        trace.intent_match = Some(decision.clone());
        let matches = self.similarity_stage(text, &decision)?;
        trace.similarity_match = Some(matches.clone());
        let mut selected: Vec<Candidate> =
            decision.valid_pairs.iter().filter(|c| c.kind != ValueKind::Table).cloned().collect();
        if !matches.is_empty() {
            let pool: Vec<Candidate> = matches.iter().map(CandidateMatch::candidate).collect();
            let valid = self.quality_check(gateway, session, text, &pool)?;
            trace.quality_check = Some(valid.clone());
            for c in valid {
                if !selected.contains(&c) {
                    selected.push(c);
                }
            }
        }
        if selected.is_empty() {
            if let Some(table) = decision.scope() {
                let table = table.to_string();
                let rewrite = self.imitation_rewrite(gateway, session, text, &table)?;
                let found = self.similarity(&rewrite, decision.named_entity, Some(&table))?;
                selected.extend(found.iter().map(CandidateMatch::candidate));
                trace.imitation_rewrite = Some(RewriteRecord { table, rewrite, matches: found });
            }
        }
        if selected.is_empty() {
            return Err(RetrieveError::EntityNotFound(text.to_string()));
        }
        trace.selected = selected;
        let geometries = self.generate_query(&trace.selected, decision.named_entity, bbox)?;
        Ok((geometries, trace))
    }
}

/// Candidates from `pool` named by the agent's list, in pool order. Entries
/// are `kind:value` labels or bare values.
fn pick(pool: &[Candidate], picked: &[Value]) -> Vec<Candidate> {
    let wanted: Vec<String> = picked
        .iter()
        .filter_map(|v| match v {
            Value::String(s) => Some(collapse_ws(s).to_lowercase()),
            Value::Object(o) => {
                let kind = o.get("kind").and_then(Value::as_str).unwrap_or("");
                let value = o.get("value").and_then(Value::as_str)?;
                Some(if kind.is_empty() { value.to_lowercase() } else { format!("{kind}:{value}").to_lowercase() })
            }
            _ => None,
        })
        .collect();
    pool.iter()
        .filter(|c| {
            let label = c.label().to_lowercase();
            let value = c.value.to_lowercase();
            wanted.iter().any(|w| *w == label || *w == value)
        })
        .cloned()
        .collect()
}
