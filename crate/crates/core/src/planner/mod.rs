//! Routing, relation parsing, mission planning and plan execution.

mod call;
mod exec;

pub use call::{parse_call_text, Arg, Call, Function, Statement};
pub use exec::{execute_plan, ExecError, StepOutcome, Toolkit};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{extract_json, last_fenced_block, AgentError, AgentRole, Ask, AskError, ChatMessage, Gateway, PLANNER_TOOLS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("router reply has no usable `Receiver`: {0}")]
    UnroutableResponse(String),
    #[error("malformed relation spec: {0}")]
    MalformedSpec(String),
    #[error("cannot plan: {0}")]
    UnplannableSpec(String),
    #[error("call syntax error at {position} in `{text}`: {reason}")]
    CallSyntax { text: String, position: usize, reason: String },
    #[error("`{0}` is not an available function")]
    NonWhitelistedCall(String),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("{function} takes {expected} arguments, got {got}")]
    Arity { function: &'static str, expected: usize, got: usize },
    #[error("argument {index} of {function} must be {expected}")]
    ArgumentType { function: &'static str, index: usize, expected: String },
    #[error("the plan has no steps")]
    EmptyPlan,
    #[error(transparent)]
    Agent(#[from] AgentError),
}

impl From<AskError<PlanError>> for PlanError {
    fn from(e: AskError<PlanError>) -> Self {
        match e {
            AskError::Agent(a) => a.into(),
            AskError::Content(c) => c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Receiver {
    Analyzer,
    Explainer,
}

/// Reads `Receiver` from a router reply.
pub fn parse_route(reply: &str) -> Result<Receiver, PlanError> {
    let v = extract_json(reply).map_err(|e| PlanError::UnroutableResponse(e.to_string()))?;
    let r = v
        .as_object()
        .and_then(|o| o.iter().find(|(k, _)| k.eq_ignore_ascii_case("receiver")))
        .and_then(|(_, v)| v.as_str())
        .ok_or_else(|| PlanError::UnroutableResponse("missing `Receiver`".into()))?;
    match r.trim().to_lowercase().as_str() {
        "analyzer" => Ok(Receiver::Analyzer),
        "explainer" => Ok(Receiver::Explainer),
        other => Err(PlanError::UnroutableResponse(format!("unknown receiver `{other}`"))),
    }
}

pub fn route(gateway: &Gateway, session: &str, prompt: &str) -> Result<Receiver, PlanError> {
    Ok(gateway.ask_parsed(session, &Ask::new(AgentRole::Router, prompt.trim()), parse_route)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityRef {
    pub entity_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationRef {
    #[serde(rename = "type")]
    pub relation: String,
    pub subject: usize,
    pub object: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationSpec {
    pub entities: Vec<EntityRef>,
    pub spatial_relations: Vec<RelationRef>,
    pub region: String,
}

fn index_of(rel: &serde_json::Map<String, Value>, keys: [&str; 2]) -> Result<usize, PlanError> {
    let v = keys
        .iter()
        .find_map(|k| rel.get(*k))
        .ok_or_else(|| PlanError::MalformedSpec(format!("relation lacks `{}`/`{}`", keys[0], keys[1])))?;
    match v {
        Value::Number(n) => n.as_u64().map(|n| n as usize),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .ok_or_else(|| PlanError::MalformedSpec(format!("relation index {v} is not a non-negative integer")))
}

impl RelationSpec {
    /// Validates and normalizes an analyzer reply; `head`/`tail` become
    /// `subject`/`object`.
    pub fn from_value(v: &Value) -> Result<Self, PlanError> {
        let bad = |m: &str| PlanError::MalformedSpec(m.to_string());
        let obj = v.as_object().ok_or_else(|| bad("expected a JSON object"))?;
        let entities = obj
            .get("entities")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing `entities` list"))?
            .iter()
            .map(|e| match e {
                Value::String(s) => Some(s.trim().to_string()),
                Value::Object(o) => o.get("entity_text").and_then(Value::as_str).map(|s| s.trim().to_string()),
                _ => None,
            })
            .map(|t| t.filter(|t| !t.is_empty()).map(|entity_text| EntityRef { entity_text }))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("every entity needs a non-empty `entity_text`"))?;
        let relations = match obj.get("spatial_relations") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(a)) => a.clone(),
            Some(_) => return Err(bad("`spatial_relations` must be a list")),
        };
        let mut spatial_relations = Vec::new();
        for r in &relations {
            let r = r.as_object().ok_or_else(|| bad("relation must be an object"))?;
            let relation = r
                .get("type")
                .and_then(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| bad("relation lacks `type`"))?
                .to_string();
            let subject = index_of(r, ["subject", "head"])?;
            let object = index_of(r, ["object", "tail"])?;
            spatial_relations.push(RelationRef { relation, subject, object });
        }
        let region = match obj.get("region") {
            None | Some(Value::Null) => String::new(),
            Some(Value::String(s)) => s.trim().to_string(),
            Some(_) => return Err(bad("`region` must be a string")),
        };
        let spec = Self { entities, spatial_relations, region };
        spec.validate().map_err(|e| match e {
            PlanError::UnplannableSpec(m) => PlanError::MalformedSpec(m),
            other => other,
        })?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.entities.is_empty() {
            return Err(PlanError::UnplannableSpec("no entities".into()));
        }
        for r in &self.spatial_relations {
            for i in [r.subject, r.object] {
                if i >= self.entities.len() {
                    return Err(PlanError::UnplannableSpec(format!(
                        "relation `{}` references entity {i} of {}",
                        r.relation,
                        self.entities.len()
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn analyze_relations(
    gateway: &Gateway,
    session: &str,
    prompt: &str,
    context: Vec<ChatMessage>,
) -> Result<RelationSpec, PlanError> {
    let ask = Ask::new(AgentRole::RelationAnalyzer, format!("query: \"{}\"", prompt.trim())).context(context);
    Ok(gateway.ask_parsed(session, &ask, |reply| {
        let v = extract_json(reply).map_err(|e| PlanError::MalformedSpec(e.to_string()))?;
        RelationSpec::from_value(&v)
    })?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub description: String,
    pub call: Call,
    pub output_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub steps: Vec<PlanStep>,
}

impl TaskPlan {
    /// Every read names an output of an earlier step or a known variable.
    pub fn validate(&self, known: &HashSet<String>) -> Result<(), PlanError> {
        if self.steps.is_empty() {
            return Err(PlanError::EmptyPlan);
        }
        let mut defined = known.clone();
        for step in &self.steps {
            for v in step.call.args.iter().filter_map(Arg::var) {
                if !defined.contains(v) {
                    return Err(PlanError::UnknownVariable(v.to_string()));
                }
            }
            defined.insert(step.output_name.clone());
        }
        Ok(())
    }
}

fn default_description(call: &Call) -> String {
    match (call.function, call.args.first()) {
        (Function::SetBoundingBox, Some(Arg::Str(s))) if s.is_empty() => "Search in all areas".into(),
        (Function::SetBoundingBox, Some(Arg::Str(s))) => format!("Set the bounding box to {s}"),
        (Function::IdListOfEntity, Some(Arg::Str(s))) => format!("Get the id_list of {s}"),
        (Function::GeoFilter, Some(Arg::Str(s))) => format!("Filter by `{s}`"),
        _ => format!("Run {call}"),
    }
}

/// Turns planner output into a plan: the last fenced block (or the whole
/// reply), one call per line. A comment line describes the next call; a
/// trailing comment describes its own line.
pub fn parse_plan(reply: &str, known: &HashSet<String>) -> Result<TaskPlan, PlanError> {
    let body = last_fenced_block(reply).map_or(reply, |(_, b)| b);
    let mut steps = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    for line in body.lines().map(str::trim) {
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            let c = c.trim();
            if !c.is_empty() {
                pending.push(c.to_string());
            }
            continue;
        }
        let st = parse_call_text(line)?;
        let description = st
            .comment
            .or_else(|| (!pending.is_empty()).then(|| pending.join(" ")))
            .unwrap_or_else(|| default_description(&st.call));
        pending.clear();
        let output_name = st.target.unwrap_or_else(|| format!("step_{}", steps.len() + 1));
        steps.push(PlanStep { description, call: st.call, output_name });
    }
    let plan = TaskPlan { steps };
    plan.validate(known)?;
    Ok(plan)
}

/// Asks the Mission Planner for a plan realizing `spec`. `variables` lists
/// the session variables the plan may read.
pub fn plan_mission(
    gateway: &Gateway,
    session: &str,
    spec: &RelationSpec,
    prompt: &str,
    variables: &[(String, String)],
) -> Result<TaskPlan, PlanError> {
    spec.validate()?;
    let known: HashSet<String> = variables.iter().map(|(k, _)| k.clone()).collect();
    let mut content = format!(
        "query: \"{}\"\nanalysis: {}\n",
        prompt.trim(),
        serde_json::to_string(spec).expect("spec serializes")
    );
    if !variables.is_empty() {
        content.push_str("variables in history:\n");
        for (k, d) in variables {
            content.push_str(&format!("- {k}: {d}\n"));
        }
    }
    let ask = Ask::new(AgentRole::MissionPlanner, content).slot("tools", PLANNER_TOOLS);
    Ok(gateway.ask_parsed(session, &ask, |reply| parse_plan(reply, &known))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn head_tail_normalize_to_subject_object() {
        let a = json!({"entities": [{"entity_text": "soil"}, {"entity_text": "farm"}],
            "spatial_relations": [{"type": "on", "head": 1, "tail": 0}], "region": "Munich"});
        let b = json!({"entities": ["soil", "farm"],
            "spatial_relations": [{"type": "on", "subject": 1, "object": 0}], "region": "Munich"});
        assert_eq!(RelationSpec::from_value(&a).unwrap(), RelationSpec::from_value(&b).unwrap());
        let c = json!({"entities": ["soil"], "spatial_relations": [{"type": "on", "head": 1, "tail": 0}]});
        assert!(matches!(RelationSpec::from_value(&c), Err(PlanError::MalformedSpec(_))));
    }

    #[test]
    fn plan_lines_and_descriptions() {
        let reply = "Plan:\n```python\n# Set the bounding box\nset_bounding_box('Munich')\nparks = id_list_of_entity('park')  # Get parks\nr = geo_filter('near', parks, parks)\n```";
        let plan = parse_plan(reply, &HashSet::new()).unwrap();
        assert_eq!(plan.steps.len(), 3);
        assert_eq!(plan.steps[0].description, "Set the bounding box");
        assert_eq!(plan.steps[0].output_name, "step_1");
        assert_eq!(plan.steps[1].description, "Get parks");
        assert_eq!(plan.steps[2].description, "Filter by `near`");
        let bad = "```\nr = geo_filter('near', a, b)\n```";
        assert_eq!(parse_plan(bad, &HashSet::new()), Err(PlanError::UnknownVariable("a".into())));
    }

    #[test]
    fn route_requires_receiver() {
        assert_eq!(parse_route("```json\n{\"Receiver\": \"Explainer\",}\n```").unwrap(), Receiver::Explainer);
        assert!(matches!(parse_route("{\"to\": \"x\"}"), Err(PlanError::UnroutableResponse(_))));
    }
}
