use std::collections::HashMap;

use serde_json::json;

use geoqa_core::agent::{AgentError, AgentRole, ChatBackend, CompletionRequest, CompletionResponse, TokenUsage};
use geoqa_core::geometry::SpatialOpSpec;
use geoqa_core::text::collapse_ws;

use crate::case::{EntitySpec, EvalCase};
use crate::phrase::{entity_text, relation_text};

/// A deterministic stand-in for the language model that answers every agent
/// from the structured cases it was built with. Running the pipeline on it
/// isolates the non-agent parts: keyword matching, vector search, query
/// generation, spatial filtering and plumbing.
#[derive(Debug, Clone, Default)]
pub struct OracleAgent {
    prompts: HashMap<String, usize>,
    cases: Vec<EvalCase>,
    entities: HashMap<String, EntitySpec>,
    relations: HashMap<String, SpatialOpSpec>,
}

fn key(text: &str) -> String {
    collapse_ws(text).to_lowercase()
}

/// Text after `prefix` up to the end of its line.
fn field<'a>(content: &'a str, prefix: &str) -> Option<&'a str> {
    content.lines().find_map(|l| l.trim().strip_prefix(prefix)).map(str::trim)
}

fn label(kind: &str, value: &str) -> String {
    format!("{kind}:{value}")
}

impl OracleAgent {
    pub fn new(cases: &[EvalCase]) -> Self {
        let mut agent = Self::default();
        for (i, case) in cases.iter().enumerate() {
            agent.prompts.insert(key(&case.nl_query), i);
            for e in &case.entities {
                agent.entities.insert(key(&entity_text(e)), e.clone());
            }
            for r in &case.relations {
                agent.relations.insert(key(&relation_text(&r.op)), r.op);
            }
        }
        agent.cases = cases.to_vec();
        agent
    }

    fn case_for(&self, content: &str) -> Option<&EvalCase> {
        let q = field(content, "query:")?.trim_matches('"');
        self.prompts.get(&key(q)).map(|&i| &self.cases[i])
    }

    fn entity_for(&self, content: &str) -> Option<&EntitySpec> {
        self.entities.get(&key(field(content, "query:")?))
    }

    fn answer(&self, req: &CompletionRequest) -> Option<String> {
        let content = req.user_content.as_str();
        Some(match req.role {
            AgentRole::Router => json!({"Receiver": "Analyzer"}).to_string(),
            AgentRole::RelationAnalyzer => {
                let case = self.case_for(content)?;
                let entities: Vec<_> = case.entities.iter().map(|e| json!({"entity_text": entity_text(e)})).collect();
                let relations: Vec<_> = case
                    .relations
                    .iter()
                    .map(|r| json!({"type": relation_text(&r.op), "subject": r.subject, "object": r.object}))
                    .collect();
                json!({"entities": entities, "spatial_relations": relations, "region": ""}).to_string()
            }
            AgentRole::MissionPlanner => {
                let case = self.case_for(content)?;
                let mut code = String::from("```python\n");
                for (i, e) in case.entities.iter().enumerate() {
                    code.push_str(&format!("# Get the id_list of {}\ne{i} = id_list_of_entity({:?})\n", entity_text(e), entity_text(e)));
                }
                let mut subject = "e0".to_string();
                for (i, r) in case.relations.iter().enumerate() {
                    let rel = relation_text(&r.op);
                    code.push_str(&format!("# Filter by `{rel}`\nf{i} = geo_filter({rel:?}, {subject}, e{})\n", r.object));
                    subject = format!("f{i}['subject']");
                }
                code.push_str(&format!("# Get the final id_list\nresult = {subject}\n```"));
                code
            }
            AgentRole::ModifyAgent => {
                let op = self.relations.get(&key(field(content, "relation:")?))?;
                serde_json::to_string(op).ok()?
            }
            AgentRole::IntentMatcher => {
                let e = self.entity_for(content)?;
                let mut pairs = Vec::new();
                if let Some(c) = &e.category {
                    pairs.push(label("category", c));
                }
                if let Some(n) = &e.name {
                    pairs.push(label("name", n));
                }
                json!({"named_entity": e.name.is_some(), "valid_pairs": pairs, "table": e.table}).to_string()
            }
            AgentRole::QualityChecker => {
                let e = self.entity_for(content)?;
                let valid = match (&e.name, &e.category) {
                    (Some(n), _) => vec![label("name", n)],
                    (None, Some(c)) => vec![label("category", c)],
                    (None, None) => vec![label("table", &e.table)],
                };
                json!({ "valid": valid }).to_string()
            }
            AgentRole::ImitationRewriter => {
                json!({"rewrite": field(content, "query:")?}).to_string()
            }
            _ => return None,
        })
    }
}

impl ChatBackend for OracleAgent {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, AgentError> {
        let text = self.answer(req).ok_or_else(|| AgentError::Rejected {
            status: 404,
            body: format!("oracle agent has no answer for {} input: {}", req.role, collapse_ws(&req.user_content)),
        })?;
        let usage = TokenUsage::new(
            (req.system_prompt.len() + req.user_content.len()) as u64 / 4,
            text.len() as u64 / 4 + 1,
        );
        Ok(CompletionResponse { text, usage })
    }
}
