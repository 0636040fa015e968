//! Request-level orchestration: route a prompt, run the Analyzer plan or the
//! Explainer, and shape the response.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentError, ChatMessage, Gateway, TokenUsage};
use crate::explainer::{explain, ChartSpec, ExplainError, ExplainKind, QueryRows};
use crate::planner::{analyze_relations, execute_plan, plan_mission, route, ExecError, Function, PlanError, Receiver, Toolkit};
use crate::region::{Geocoder, RegionSelector};
use crate::retriever::{EntityRetriever, RetrieverConfig};
use crate::session::{Layer, SessionState, StepSnapshot, Variable};
use crate::store::KnowledgeStore;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("prompt must not be empty")]
    EmptyPrompt,
    /// The agent backend failed; maps to a gateway error at the HTTP layer.
    #[error(transparent)]
    Agent(AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseKind {
    Layers,
    Text,
    Chart,
    Table,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRef {
    pub index: usize,
    pub description: String,
    pub step_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub session_id: String,
    pub kind: ResponseKind,
    pub message: String,
    /// Present iff the Analyzer ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepRef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<Layer>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<QueryRows>,
    /// Keys of the plan's final id_list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result_keys: Option<Vec<String>>,
    pub usage: TokenUsage,
}

impl QueryResponse {
    fn new(session_id: &str, kind: ResponseKind, message: impl Into<String>) -> Self {
        Self {
            session_id: session_id.to_string(),
            kind,
            message: message.into(),
            steps: None,
            layers: None,
            chart: None,
            table: None,
            result_keys: None,
            usage: TokenUsage::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub retriever: RetrieverConfig,
    /// Prior exchanges given to the Relation Analyzer and Explainer.
    pub context_exchanges: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { retriever: RetrieverConfig::default(), context_exchanges: 3 }
    }
}

type SharedSession = Arc<Mutex<SessionState>>;

pub struct Engine {
    gateway: Arc<Gateway>,
    store: Arc<KnowledgeStore>,
    retriever: EntityRetriever,
    regions: RegionSelector,
    config: EngineConfig,
    sessions: Mutex<HashMap<String, SharedSession>>,
    step_owners: Mutex<HashMap<String, String>>,
}

fn backend_or<E>(e: AgentError, other: impl FnOnce(AgentError) -> E) -> Result<E, EngineError> {
    if e.is_backend_failure() {
        Err(EngineError::Agent(e))
    } else {
        Ok(other(e))
    }
}

impl Engine {
    pub fn new(gateway: Arc<Gateway>, store: Arc<KnowledgeStore>, geocoder: Box<dyn Geocoder>, config: EngineConfig) -> Self {
        Self {
            retriever: EntityRetriever::new(store.clone(), config.retriever),
            regions: RegionSelector::new(geocoder),
            gateway,
            store,
            config,
            sessions: Mutex::new(HashMap::new()),
            step_owners: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Arc<KnowledgeStore> {
        &self.store
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn retriever(&self) -> &EntityRetriever {
        &self.retriever
    }

    fn session(&self, id: &str) -> SharedSession {
        self.gateway.open_session(id);
        self.sessions
            .lock()
            .unwrap()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(SessionState::new(id))))
            .clone()
    }

    /// Read access to a session, if it exists.
    pub fn with_session<R>(&self, id: &str, f: impl FnOnce(&SessionState) -> R) -> Option<R> {
        let s = self.sessions.lock().unwrap().get(id).cloned()?;
        let guard = s.lock().unwrap();
        Some(f(&guard))
    }

    pub fn step(&self, step_id: &str) -> Option<StepSnapshot> {
        let owner = self.step_owners.lock().unwrap().get(step_id).cloned()?;
        self.with_session(&owner, |s| s.steps.get(step_id).cloned()).flatten()
    }

    /// Answers one prompt. Prompts of one session run one at a time.
    pub fn query(&self, session_id: &str, prompt: &str) -> Result<QueryResponse, EngineError> {
        let prompt = prompt.trim();
        if prompt.is_empty() {
            return Err(EngineError::EmptyPrompt);
        }
        let shared = self.session(session_id);
        let mut session = shared.lock().unwrap();
        let before = self.gateway.usage_report(session_id).unwrap_or_default();
        let mut response = self.dispatch(&mut session, prompt)?;
        let after = self.gateway.usage_report(session_id).unwrap_or_default();
        response.usage = TokenUsage::new(after.input_tokens - before.input_tokens, after.output_tokens - before.output_tokens);
        session.history.push(ChatMessage::user(prompt));
        session.history.push(ChatMessage::assistant(response.message.clone()));
        Ok(response)
    }

    fn dispatch(&self, session: &mut SessionState, prompt: &str) -> Result<QueryResponse, EngineError> {
        let sid = session.id.clone();
        let receiver = match route(&self.gateway, &sid, prompt) {
            Ok(r) => r,
            Err(PlanError::Agent(e)) => return backend_or(e, |e| QueryResponse::new(&sid, ResponseKind::Error, e.to_string())),
            Err(e) => return Ok(QueryResponse::new(&sid, ResponseKind::Error, e.to_string())),
        };
        match receiver {
            Receiver::Analyzer => self.analyze(session, prompt),
            Receiver::Explainer => self.explain(session, prompt),
        }
    }

    fn plan_error(&self, sid: &str, e: PlanError) -> Result<QueryResponse, EngineError> {
        match e {
            PlanError::Agent(a) => backend_or(a, |a| QueryResponse::new(sid, ResponseKind::Error, a.to_string())),
            other => Ok(QueryResponse::new(sid, ResponseKind::Error, other.to_string())),
        }
    }

    fn analyze(&self, session: &mut SessionState, prompt: &str) -> Result<QueryResponse, EngineError> {
        let sid = session.id.clone();
        let context = session.recent_exchanges(self.config.context_exchanges);
        let spec = match analyze_relations(&self.gateway, &sid, prompt, context) {
            Ok(s) => s,
            Err(e) => return self.plan_error(&sid, e),
        };
        let variables: Vec<(String, String)> =
            session.variables.iter().map(|(k, v)| (k.clone(), v.describe())).collect();
        let plan = match plan_mission(&self.gateway, &sid, &spec, prompt, &variables) {
            Ok(p) => p,
            Err(e) => return self.plan_error(&sid, e),
        };
        let existing: HashSet<String> = session.steps.keys().cloned().collect();
        let kit = Toolkit { gateway: &self.gateway, retriever: &self.retriever, regions: &self.regions };
        let outcome = execute_plan(&plan, session, &kit);
        // Steps finished before a failure stay inspectable.
        let new_steps: Vec<StepRef> = session
            .steps
            .values()
            .filter(|s| !existing.contains(&s.step_id))
            .map(|s| StepRef { index: s.index, description: s.description.clone(), step_id: s.step_id.clone() })
            .collect();
        {
            let mut owners = self.step_owners.lock().unwrap();
            for s in &new_steps {
                owners.insert(s.step_id.clone(), sid.clone());
            }
        }
        let mut response = match outcome {
            Ok(_) => {
                let mut r = QueryResponse::new(&sid, ResponseKind::Layers, String::new());
                let last = plan.steps.last().expect("validated plans are non-empty");
                let layers = self.final_layers(session, last);
                let keys = session.last_result.as_ref().and_then(|n| session.get(n)).and_then(|v| match v {
                    Variable::GeoSet(s) => Some(s.keys().map(|k| k.to_string()).collect::<Vec<_>>()),
                    Variable::Filter(f) => Some(f.subject.keys().map(|k| k.to_string()).collect()),
                    Variable::BoundingBox(_) => None,
                });
                r.message = summarize(&layers);
                r.layers = Some(layers);
                r.result_keys = keys;
                r
            }
            Err(ExecError::Agent(e)) => return Err(EngineError::Agent(e)),
            Err(e @ ExecError::StepFailed { .. }) => QueryResponse::new(&sid, ResponseKind::Error, e.to_string()),
        };
        response.steps = Some(new_steps);
        Ok(response)
    }

    /// Layers of the last step; when it only picks one side of a filter
    /// result, both sides of that result are shown.
    fn final_layers(&self, session: &SessionState, last: &crate::planner::PlanStep) -> Vec<Layer> {
        if last.call.function == Function::Select {
            if let Some(var) = last.call.args.first().and_then(|a| a.var()) {
                if let Some(v @ Variable::Filter(_)) = session.get(var) {
                    return v.layers();
                }
            }
        }
        session.get(&last.output_name).map(Variable::layers).unwrap_or_default()
    }

    fn explain(&self, session: &mut SessionState, prompt: &str) -> Result<QueryResponse, EngineError> {
        let sid = session.id.clone();
        let snapshot = self.store.snapshot();
        match explain(&self.gateway, session, snapshot.graph(), prompt) {
            Ok(r) => {
                let kind = match r.kind {
                    ExplainKind::Text => ResponseKind::Text,
                    ExplainKind::Chart => ResponseKind::Chart,
                    ExplainKind::Table => ResponseKind::Table,
                };
                let mut resp = QueryResponse::new(&sid, kind, r.text);
                resp.chart = r.chart;
                resp.table = r.table;
                Ok(resp)
            }
            Err(ExplainError::Agent(e)) => backend_or(e, |e| QueryResponse::new(&sid, ResponseKind::Error, e.to_string())),
            Err(e) => Ok(QueryResponse::new(&sid, ResponseKind::Error, e.to_string())),
        }
    }
}

fn summarize(layers: &[Layer]) -> String {
    if layers.is_empty() {
        return "No matching entities were found.".into();
    }
    let parts: Vec<String> = layers.iter().map(|l| format!("{} ({})", l.layer_name, l.features.len())).collect();
    format!("Results: {}", parts.join(", "))
}
