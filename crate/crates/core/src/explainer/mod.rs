//! Descriptive answers, charts and schema questions. The agent may run graph
//! queries over several iterations before answering.

mod chart;
mod graph_query;

pub use chart::{make_histogram, sturges_bins, ChartError, ChartKind, ChartSpec, CHART_SPEC_VERSION};
pub use graph_query::{
    parse_graph_query, run_graph_query, Attribute, GraphQuery, GraphQueryError, Hop, NodePattern, Projection, QueryRows,
};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent::{last_fenced_block, lenient_json, AgentError, AgentRole, Ask, Gateway};
use crate::session::{SessionState, Variable};
use crate::store::SchemaGraph;
use crate::GeoSet;

pub const MAX_ITERATIONS: usize = 5;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("no final answer after {0} iterations")]
    IterationLimit(usize),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainKind {
    Text,
    Chart,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResult {
    pub kind: ExplainKind,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<QueryRows>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Area,
    Length,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartRequest {
    pub variable: String,
    pub measure: Measure,
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default)]
    pub title: Option<String>,
}

fn variable_set(session: &SessionState, name: &str) -> Result<GeoSet, String> {
    let (var, field) = match name.split_once('[') {
        Some((v, rest)) => (v.trim(), Some(rest.trim_end_matches(']').trim_matches(['\'', '"']))),
        None => (name.trim(), None),
    };
    match (session.get(var), field) {
        (None, _) => Err(format!("unknown session variable `{var}`")),
        (Some(Variable::GeoSet(s)), None) => Ok(s.clone()),
        (Some(Variable::Filter(r)), None | Some("subject")) => Ok(r.subject.clone()),
        (Some(Variable::Filter(r)), Some("object")) => Ok(r.object.clone()),
        _ => Err(format!("`{name}` does not hold geometries")),
    }
}

/// Builds the chart a request asks for from session data.
pub fn chart_for(session: &SessionState, req: &ChartRequest) -> Result<ChartSpec, String> {
    let set = variable_set(session, &req.variable)?;
    let (values, x_label): (Vec<f64>, &str) = match req.measure {
        Measure::Area => (set.geometries().map(|g| g.area_m2()).collect(), "area (m²)"),
        Measure::Length => (set.geometries().map(|g| g.length_m()).collect(), "length (m)"),
    };
    let mut spec = make_histogram(&values, req.bins).map_err(|e| e.to_string())?;
    spec.title = req.title.clone().unwrap_or_else(|| format!("Distribution of {x_label} in {}", req.variable));
    spec.x_label = x_label.to_string();
    Ok(spec)
}

fn render_rows(rows: &QueryRows) -> String {
    let mut out = rows.columns.join(" | ");
    if rows.rows.is_empty() {
        out.push_str("\n(no rows)");
    }
    for r in &rows.rows {
        out.push('\n');
        out.push_str(&r.join(" | "));
    }
    out
}

/// Text of a reply with its last fenced block removed.
fn prose(reply: &str) -> String {
    match reply.rfind("```") {
        Some(_) => {
            let mut parts: Vec<&str> = reply.split("```").collect();
            if parts.len() >= 3 {
                parts.remove(parts.len() - 2);
            }
            parts.concat().trim().to_string()
        }
        None => reply.trim().to_string(),
    }
}

/// Runs the Explainer loop: graph queries and failed chart requests are
/// answered with an observation appended to the next request; a chart or a
/// reply without code ends the loop.
pub fn explain(
    gateway: &Gateway,
    session: &SessionState,
    graph: &SchemaGraph,
    prompt: &str,
) -> Result<ExplainResult, ExplainError> {
    let mut content = format!("question: {}\n\nsession variables:\n{}", prompt.trim(), session.describe_variables());
    if let Some(last) = &session.last_result {
        content.push_str(&format!("\nlatest result: {last}"));
    }
    let context = session.recent_exchanges(3);
    let mut last_rows: Option<QueryRows> = None;
    for iteration in 1..=MAX_ITERATIONS {
        let ask = Ask::new(AgentRole::Explainer, content.clone()).context(context.clone());
        let reply = gateway.ask(&session.id, &ask)?.text;
        let observation = match last_fenced_block(&reply) {
            Some((tag, body)) if tag.eq_ignore_ascii_case("cypher") => match parse_graph_query(body) {
                Ok(q) => match run_graph_query(graph, &q) {
                    Ok(rows) => {
                        let text = format!("Result of the cypher code:\n{}", render_rows(&rows));
                        last_rows = Some(rows);
                        text
                    }
                    Err(e) => format!("Error: {e}"),
                },
                Err(e) => format!("Error: {e}"),
            },
            Some((tag, body)) if tag.eq_ignore_ascii_case("chart") => {
                let req = lenient_json(body)
                    .map_err(|e| e.to_string())
                    .and_then(|v: Value| serde_json::from_value::<ChartRequest>(v).map_err(|e| e.to_string()));
                match req.and_then(|r| chart_for(session, &r)) {
                    Ok(chart) => {
                        let text = prose(&reply);
                        let text = if text.is_empty() { chart.title.clone() } else { text };
                        return Ok(ExplainResult {
                            kind: ExplainKind::Chart,
                            text,
                            chart: Some(chart),
                            table: None,
                            iterations: iteration,
                        });
                    }
                    Err(e) => format!("Error: chart request failed: {e}"),
                }
            }
            Some((tag, _)) => format!("Error: `{tag}` code is not executed here; use a cypher or chart block."),
            None => {
                let text = reply.trim().to_string();
                if text.is_empty() {
                    if let Some(rows) = last_rows {
                        return Ok(ExplainResult {
                            kind: ExplainKind::Table,
                            text: String::new(),
                            chart: None,
                            table: Some(rows),
                            iterations: iteration,
                        });
                    }
                }
                return Ok(ExplainResult { kind: ExplainKind::Text, text, chart: None, table: None, iterations: iteration });
            }
        };
        content.push_str(&format!("\n\nObservation {iteration}:\n{observation}"));
    }
    Err(ExplainError::IterationLimit(MAX_ITERATIONS))
}
