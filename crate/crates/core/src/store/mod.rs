//! In-process knowledge store: geometries per table, an embedding index over
//! table, category and name values, and the materialized schema graph.

mod embed;
mod geojson;
mod graph;

pub use embed::{cosine, EmbedError, Embedder, HttpEmbedder, TrigramEmbedder, TRIGRAM_DIM};
pub use graph::{Edge, Node, SchemaGraph};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{parse_wkt, EntityKey, Geometry};
use crate::text::{singular_tokens, singularize};
use crate::{BoundingBox, GeoSet};

/// Default and maximum number of similarity candidates handed to agents.
pub const DEFAULT_TOP_K: usize = 50;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("document is not a GeoJSON FeatureCollection")]
    NotFeatureCollection,
    #[error("invalid {what} name `{name}`: must be non-empty without underscores")]
    InvalidName { what: &'static str, name: String },
    #[error("table `{table}` already belongs to database `{database}`")]
    TableConflict { table: String, database: String },
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("no indexed values in the requested scope")]
    EmptyIndex,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("snapshot i/o failed for {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt snapshot: {0}")]
    Snapshot(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Table,
    Category,
    EntryName,
}

impl ValueKind {
    /// Short label used in agent-facing candidate lists.
    pub fn label(self) -> &'static str {
        match self {
            ValueKind::Table => "table",
            ValueKind::Category => "category",
            ValueKind::EntryName => "name",
        }
    }
}

/// A schema term: where a matched value lives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub kind: ValueKind,
    pub table: String,
    pub value: String,
}

impl Candidate {
    pub fn new(kind: ValueKind, table: impl Into<String>, value: impl Into<String>) -> Self {
        Self { kind, table: table.into(), value: value.into() }
    }

    /// `kind:value`, the form agents see and answer with.
    pub fn label(&self) -> String {
        format!("{}:{}", self.kind.label(), self.value)
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMatch {
    pub kind: ValueKind,
    pub table: String,
    pub value: String,
    pub score: f64,
}

impl CandidateMatch {
    pub fn candidate(&self) -> Candidate {
        Candidate::new(self.kind, self.table.clone(), self.value.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub text: String,
    pub kind: ValueKind,
    pub table: String,
    #[serde(skip)]
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFeature {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub dataset: String,
    pub table: String,
    pub tables: usize,
    pub features: usize,
    pub stored: usize,
    pub embedded_values: usize,
    pub skipped: Vec<SkippedFeature>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub key: EntityKey,
    pub geometry: Geometry<f64>,
    pub category: Option<String>,
    pub name: String,
    pub properties: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableData {
    pub database: String,
    pub name: String,
    pub rows: Vec<FeatureRow>,
    pub source_digest: String,
    pub report: IngestReport,
}

/// Which geometries of a table to fetch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Selector {
    pub table: String,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(default)]
    pub names: Option<Vec<String>>,
}

impl Selector {
    pub fn table(table: impl Into<String>) -> Self {
        Self { table: table.into(), ..Self::default() }
    }

    pub fn category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }

    pub fn names<I: IntoIterator<Item = S>, S: Into<String>>(mut self, names: I) -> Self {
        self.names = Some(names.into_iter().map(Into::into).collect());
        self
    }
}

#[derive(Debug, Clone)]
struct Keyword {
    candidate: Candidate,
    tokens: Vec<String>,
}

/// Immutable view of the whole store; ingestion swaps in a new one.
#[derive(Debug, Clone, Default)]
pub struct StoreState {
    tables: IndexMap<String, TableData>,
    graph: SchemaGraph,
    vectors: Vec<VectorRecord>,
    keywords: Vec<Keyword>,
    generation: u64,
}

impl StoreState {
    pub fn tables(&self) -> impl Iterator<Item = &TableData> {
        self.tables.values()
    }

    pub fn table(&self, name: &str) -> Option<&TableData> {
        self.tables.get(name)
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }

    pub fn graph(&self) -> &SchemaGraph {
        &self.graph
    }

    pub fn vectors(&self) -> &[VectorRecord] {
        &self.vectors
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }
}

/// Thread-safe store. Readers work on snapshots; ingestion builds a new
/// state off to the side and swaps it in.
pub struct KnowledgeStore {
    state: RwLock<Arc<StoreState>>,
    writer: Mutex<()>,
    embedder: Arc<dyn Embedder>,
    query_embeddings: AtomicU64,
}

fn check_name(what: &'static str, name: &str) -> Result<(), StoreError> {
    if name.is_empty() || name.contains('_') {
        return Err(StoreError::InvalidName { what, name: name.into() });
    }
    Ok(())
}

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl KnowledgeStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            state: RwLock::new(Arc::new(StoreState::default())),
            writer: Mutex::new(()),
            embedder,
            query_embeddings: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Arc<StoreState> {
        self.state.read().unwrap().clone()
    }

    pub fn generation(&self) -> u64 {
        self.snapshot().generation
    }

    pub fn table_names(&self) -> Vec<String> {
        self.snapshot().table_names()
    }

    /// Number of query embeddings computed so far (not counting ingestion).
    pub fn query_embedding_count(&self) -> u64 {
        self.query_embeddings.load(Ordering::SeqCst)
    }

    pub fn ingest_geojson_str(&self, dataset: &str, table: Option<&str>, text: &str) -> Result<IngestReport, StoreError> {
        let doc: Value = serde_json::from_str(text).map_err(|_| StoreError::NotFeatureCollection)?;
        self.ingest_geojson(dataset, table, &doc)
    }

    /// Stores a FeatureCollection as `table` (default: the dataset name) of
    /// database `dataset`. Re-ingesting an unchanged document is a no-op; a
    /// changed document replaces the table.
    pub fn ingest_geojson(&self, dataset: &str, table: Option<&str>, doc: &Value) -> Result<IngestReport, StoreError> {
        let table = table.unwrap_or(dataset);
        check_name("dataset", dataset)?;
        check_name("table", table)?;
        let _guard = self.writer.lock().unwrap();
        let current = self.snapshot();
        if let Some(existing) = current.tables.get(table) {
            if existing.database != dataset {
                return Err(StoreError::TableConflict { table: table.into(), database: existing.database.clone() });
            }
        }
        let digest = sha_hex(&serde_json::to_vec(doc).expect("json serializes"));
        if let Some(existing) = current.tables.get(table) {
            if existing.source_digest == digest {
                return Ok(existing.report.clone());
            }
        }
        let (rows, skipped) = geojson::parse_collection(dataset, table, doc)?;
        let mut report = IngestReport {
            dataset: dataset.into(),
            table: table.into(),
            tables: 1,
            features: rows.len() + skipped.len(),
            stored: rows.len(),
            embedded_values: 0,
            skipped,
        };
        let mut tables = current.tables.clone();
        tables.insert(
            table.into(),
            TableData {
                database: dataset.into(),
                name: table.into(),
                rows,
                source_digest: digest,
                report: report.clone(),
            },
        );
        let cache: HashMap<&str, &[f32]> =
            current.vectors.iter().map(|r| (r.text.as_str(), r.vector.as_slice())).collect();
        let mut next = build_state(tables, &*self.embedder, &cache)?;
        report.embedded_values = next.vectors.iter().filter(|r| r.table == table).count();
        next.tables.get_mut(table).expect("just inserted").report = report.clone();
        next.generation = current.generation + 1;
        *self.state.write().unwrap() = Arc::new(next);
        tracing::info!(dataset, table, stored = report.stored, skipped = report.skipped.len(), "ingested");
        Ok(report)
    }

    /// Top-`k` values by cosine similarity, restricted to `scope` and `kinds`.
    pub fn similarity_search(
        &self,
        query: &str,
        k: usize,
        scope: Option<&str>,
        kinds: &[ValueKind],
    ) -> Result<Vec<CandidateMatch>, StoreError> {
        let state = self.snapshot();
        let pool: Vec<&VectorRecord> = state
            .vectors
            .iter()
            .filter(|r| scope.is_none_or(|s| r.table == s) && (kinds.is_empty() || kinds.contains(&r.kind)))
            .collect();
        if pool.is_empty() {
            return Err(StoreError::EmptyIndex);
        }
        self.query_embeddings.fetch_add(1, Ordering::SeqCst);
        let q = self.embedder.embed(query)?;
        let mut out: Vec<CandidateMatch> = pool
            .into_iter()
            .map(|r| CandidateMatch {
                kind: r.kind,
                table: r.table.clone(),
                value: r.text.clone(),
                score: cosine(&q, &r.vector),
            })
            .collect();
        out.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.value.cmp(&b.value))
        });
        out.truncate(k);
        Ok(out)
    }

    /// Schema terms matching `term` exactly (after singularization, ignoring
    /// case) or contained in it as a contiguous token run. Exact matches are
    /// flagged `true`. Order follows the keyword store: tables, then
    /// categories, then names.
    pub fn keyword_matches(&self, term: &str) -> Vec<(Candidate, bool)> {
        let query = singular_tokens(term);
        if query.is_empty() {
            return Vec::new();
        }
        self.snapshot()
            .keywords
            .iter()
            .filter_map(|k| {
                let n = k.tokens.len();
                if n == 0 || n > query.len() {
                    return None;
                }
                if k.tokens == query {
                    return Some((k.candidate.clone(), true));
                }
                query.windows(n).any(|w| w == k.tokens.as_slice()).then(|| (k.candidate.clone(), false))
            })
            .collect()
    }

    pub fn keyword_lookup(&self, term: &str) -> Vec<Candidate> {
        self.keyword_matches(term).into_iter().map(|(c, _)| c).collect()
    }

    pub fn get_geometries(&self, selector: &Selector, bbox: Option<&BoundingBox>) -> Result<GeoSet, StoreError> {
        let state = self.snapshot();
        let table = state
            .tables
            .get(&selector.table)
            .ok_or_else(|| StoreError::UnknownTable(selector.table.clone()))?;
        let names: Option<HashSet<&str>> = selector.names.as_ref().map(|n| n.iter().map(String::as_str).collect());
        Ok(table
            .rows
            .iter()
            .filter(|r| selector.category.as_ref().is_none_or(|c| r.category.as_ref() == Some(c)))
            .filter(|r| names.as_ref().is_none_or(|n| n.contains(r.name.as_str())))
            .filter(|r| bbox.is_none_or(|b| r.geometry.bbox().intersects(b)))
            .map(|r| (r.key.clone(), r.geometry.clone()))
            .collect())
    }

    /// Up to `n` `(category, name)` rows of a table, in storage order.
    pub fn sample_rows(&self, table: &str, n: usize) -> Result<Vec<(String, String)>, StoreError> {
        let state = self.snapshot();
        let t = state.tables.get(table).ok_or_else(|| StoreError::UnknownTable(table.into()))?;
        Ok(t.rows
            .iter()
            .take(n)
            .map(|r| (r.category.clone().unwrap_or_default(), r.name.clone()))
            .collect())
    }

    /// Tables a key can belong to according to the schema graph: tables of
    /// the key's database whose category values (or default type) match.
    pub fn resolve_key(&self, key: &EntityKey) -> Vec<String> {
        let state = self.snapshot();
        let g = &state.graph;
        let Some(db) = g.find("database", &key.database) else { return Vec::new() };
        let category = g.find("fclass", &key.type_name);
        g.neighbors(db, "database_table")
            .filter(|&t| {
                let table = &g.nodes()[t].id;
                category.is_some_and(|c| g.neighbors(t, "table_fclass").any(|v| v == c))
                    || singularize(table) == key.type_name
            })
            .map(|t| g.nodes()[t].id.clone())
            .collect()
    }

    /// SHA-256 over a canonical rendering of tables, graph and vectors.
    pub fn digest(&self) -> String {
        let state = self.snapshot();
        let mut h = Sha256::new();
        for t in state.tables.values() {
            h.update(format!("table\0{}\0{}\0", t.database, t.name));
            for r in &t.rows {
                h.update(format!(
                    "{}\0{}\0{}\0{}\0",
                    r.key,
                    r.geometry,
                    r.category.as_deref().unwrap_or(""),
                    Value::Object(r.properties.clone())
                ));
            }
        }
        for n in state.graph.nodes() {
            h.update(format!("node\0{}\0{}\0", n.node_type, n.id));
        }
        for e in state.graph.edges() {
            h.update(format!("edge\0{}\0{}\0{}\0", e.edge_type, e.source, e.target));
        }
        for v in &state.vectors {
            h.update(format!("vec\0{}\0{:?}\0{}\0", v.text, v.kind, v.table));
            for x in &v.vector {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Writes `geometries.json`, `graph.json`, `vectors.meta.json` and
    /// `vectors.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), StoreError> {
        let state = self.snapshot();
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| StoreError::Io { path, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let tables: Vec<SnapshotTable> = state.tables.values().map(SnapshotTable::from).collect();
        let write = |name: &str, bytes: &[u8]| {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(io(&p))
        };
        write("geometries.json", &serde_json::to_vec(&tables).expect("tables serialize"))?;
        write("graph.json", state.graph.to_json().as_bytes())?;
        let meta = VectorMeta {
            model: self.embedder.model_id(),
            dim: self.embedder.dim(),
            records: state.vectors.clone(),
        };
        write("vectors.meta.json", &serde_json::to_vec(&meta).expect("meta serializes"))?;
        let bin: Vec<u8> = state.vectors.iter().flat_map(|r| r.vector.iter().flat_map(|x| x.to_le_bytes())).collect();
        write("vectors.bin", &bin)
    }

    /// Loads a snapshot written by [`save`](Self::save). A missing directory
    /// yields an empty store.
    pub fn load(dir: &Path, embedder: Arc<dyn Embedder>) -> Result<Self, StoreError> {
        let store = Self::new(embedder);
        let geometries = dir.join("geometries.json");
        if !geometries.exists() {
            return Ok(store);
        }
        let read = |name: &str| {
            let p = dir.join(name);
            std::fs::read(&p).map_err(|source| StoreError::Io { path: p.display().to_string(), source })
        };
        let corrupt = |e: &dyn fmt::Display| StoreError::Snapshot(e.to_string());
        let tables: Vec<SnapshotTable> = serde_json::from_slice(&read("geometries.json")?).map_err(|e| corrupt(&e))?;
        let graph = SchemaGraph::from_json(&String::from_utf8_lossy(&read("graph.json")?)).map_err(|e| corrupt(&e))?;
        let meta: VectorMeta = serde_json::from_slice(&read("vectors.meta.json")?).map_err(|e| corrupt(&e))?;
        if meta.model != store.embedder.model_id() || meta.dim != store.embedder.dim() {
            return Err(StoreError::Snapshot(format!(
                "vectors were built with {} but the configured embedder is {}",
                meta.model,
                store.embedder.model_id()
            )));
        }
        let bin = read("vectors.bin")?;
        if bin.len() != meta.records.len() * meta.dim * 4 {
            return Err(StoreError::Snapshot("vectors.bin size does not match its metadata".into()));
        }
        let mut vectors = meta.records;
        for (i, r) in vectors.iter_mut().enumerate() {
            let start = i * meta.dim * 4;
            r.vector = bin[start..start + meta.dim * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
        }
        let mut state_tables = IndexMap::new();
        for t in tables {
            let t = t.into_table().map_err(|e| corrupt(&e))?;
            state_tables.insert(t.name.clone(), t);
        }
        let keywords = build_keywords(&state_tables);
        *store.state.write().unwrap() = Arc::new(StoreState {
            tables: state_tables,
            graph,
            vectors,
            keywords,
            generation: 1,
        });
        Ok(store)
    }
}

fn build_state(
    tables: IndexMap<String, TableData>,
    embedder: &dyn Embedder,
    cache: &HashMap<&str, &[f32]>,
) -> Result<StoreState, StoreError> {
    let mut graph = SchemaGraph::new();
    for t in tables.values() {
        let db = graph.add_node("database", &t.database);
        let tn = graph.add_node("table", &t.name);
        graph.link(db, tn);
        for r in &t.rows {
            if let Some(c) = &r.category {
                let v = graph.add_node("fclass", c);
                graph.link(tn, v);
            }
            if !r.name.is_empty() {
                let v = graph.add_node("name", &r.name);
                graph.link(tn, v);
            }
        }
    }
    let mut vectors = Vec::new();
    let mut fresh: HashMap<String, Vec<f32>> = HashMap::new();
    for (kind, table, text) in value_records(&tables) {
        let vector = match cache.get(text.as_str()) {
            Some(v) => v.to_vec(),
            None => match fresh.get(&text) {
                Some(v) => v.clone(),
                None => {
                    let v = embedder.embed(&text)?;
                    fresh.insert(text.clone(), v.clone());
                    v
                }
            },
        };
        vectors.push(VectorRecord { text, kind, table, vector });
    }
    let keywords = build_keywords(&tables);
    Ok(StoreState { tables, graph, vectors, keywords, generation: 0 })
}

/// Distinct `(kind, table, text)` values per table: the table name, its
/// categories, then its names, each in first-seen order.
fn value_records(tables: &IndexMap<String, TableData>) -> Vec<(ValueKind, String, String)> {
    let mut out = Vec::new();
    for t in tables.values() {
        out.push((ValueKind::Table, t.name.clone(), t.name.clone()));
        let mut seen = HashSet::new();
        for c in t.rows.iter().filter_map(|r| r.category.as_ref()) {
            if seen.insert(c) {
                out.push((ValueKind::Category, t.name.clone(), c.clone()));
            }
        }
        let mut seen = HashSet::new();
        for r in t.rows.iter().filter(|r| !r.name.is_empty()) {
            if seen.insert(&r.name) {
                out.push((ValueKind::EntryName, t.name.clone(), r.name.clone()));
            }
        }
    }
    out
}

fn build_keywords(tables: &IndexMap<String, TableData>) -> Vec<Keyword> {
    let records = value_records(tables);
    let mut out = Vec::new();
    for kind in [ValueKind::Table, ValueKind::Category, ValueKind::EntryName] {
        for (k, table, text) in records.iter().filter(|r| r.0 == kind) {
            let value = if *k == ValueKind::Table { singularize(text) } else { text.clone() };
            out.push(Keyword { tokens: singular_tokens(&value), candidate: Candidate::new(*k, table.clone(), value) });
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct SnapshotRow {
    key: EntityKey,
    wkt: String,
    category: Option<String>,
    name: String,
    properties: Map<String, Value>,
}

#[derive(Serialize, Deserialize)]
struct SnapshotTable {
    database: String,
    name: String,
    source_digest: String,
    report: IngestReport,
    rows: Vec<SnapshotRow>,
}

impl From<&TableData> for SnapshotTable {
    fn from(t: &TableData) -> Self {
        Self {
            database: t.database.clone(),
            name: t.name.clone(),
            source_digest: t.source_digest.clone(),
            report: t.report.clone(),
            rows: t
                .rows
                .iter()
                .map(|r| SnapshotRow {
                    key: r.key.clone(),
                    wkt: r.geometry.to_wkt(),
                    category: r.category.clone(),
                    name: r.name.clone(),
                    properties: r.properties.clone(),
                })
                .collect(),
        }
    }
}

impl SnapshotTable {
    fn into_table(self) -> Result<TableData, crate::geometry::GeometryError> {
        let rows = self
            .rows
            .into_iter()
            .map(|r| {
                Ok(FeatureRow {
                    geometry: parse_wkt(&r.wkt)?,
                    key: r.key,
                    category: r.category,
                    name: r.name,
                    properties: r.properties,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(TableData {
            database: self.database,
            name: self.name,
            rows,
            source_digest: self.source_digest,
            report: self.report,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct VectorMeta {
    model: String,
    dim: usize,
    records: Vec<VectorRecord>,
}
