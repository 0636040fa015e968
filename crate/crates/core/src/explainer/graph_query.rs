//! A single-pattern subset of Cypher over the schema graph.
//!
//! ```text
//! MATCH (a {type:'table'})                      RETURN a.id
//! MATCH (a:table {id:'land'})-[r:table_fclass]->(b) RETURN b.id, b.type
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::store::SchemaGraph;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphQueryError {
    #[error("graph query syntax error at {position}: {reason}")]
    Syntax { position: usize, reason: String },
    #[error("unsupported graph query feature: {0}")]
    UnsupportedFeature(String),
    #[error("unknown edge type `{0}`")]
    UnknownEdgeType(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodePattern {
    pub var: String,
    pub node_type: Option<String>,
    pub id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub edge_var: Option<String>,
    /// `None` matches any edge.
    pub edge_type: Option<String>,
    pub target: NodePattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Id,
    Type,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Projection {
    pub var: String,
    pub attribute: Attribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphQuery {
    pub source: NodePattern,
    pub hop: Option<Hop>,
    pub projections: Vec<Projection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRows {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

impl fmt::Display for NodePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.var)?;
        let mut props = Vec::new();
        if let Some(t) = &self.node_type {
            props.push(format!("type:{}", quote(t)));
        }
        if let Some(i) = &self.id {
            props.push(format!("id:{}", quote(i)));
        }
        if !props.is_empty() {
            write!(f, " {{{}}}", props.join(", "))?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::Id => "id",
            Attribute::Type => "type",
        })
    }
}

impl fmt::Display for GraphQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MATCH {}", self.source)?;
        if let Some(h) = &self.hop {
            match (&h.edge_var, &h.edge_type) {
                (None, None) => f.write_str("-->")?,
                (v, t) => {
                    let t = t.as_ref().map(|t| format!(":{t}")).unwrap_or_default();
                    write!(f, "-[{}{t}]->", v.as_deref().unwrap_or(""))?;
                }
            }
            write!(f, "{}", h.target)?;
        }
        let p: Vec<String> = self.projections.iter().map(|p| format!("{}.{}", p.var, p.attribute)).collect();
        write!(f, " RETURN {}", p.join(", "))
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err<T>(&self, reason: impl Into<String>) -> Result<T, GraphQueryError> {
        Err(GraphQueryError::Syntax { position: self.pos, reason: reason.into() })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), GraphQueryError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.err(format!("expected `{token}`"))
        }
    }

    fn keyword(&mut self, kw: &str) -> bool {
        self.skip_ws();
        let r = self.rest();
        let matches = r.len() >= kw.len()
            && r[..kw.len()].eq_ignore_ascii_case(kw)
            && !r[kw.len()..].starts_with(|c: char| c.is_alphanumeric() || c == '_');
        if matches {
            self.pos += kw.len();
        }
        matches
    }

    fn ident(&mut self) -> Option<String> {
        self.skip_ws();
        let r = self.rest();
        let len = r
            .char_indices()
            .find(|(i, c)| !(c.is_alphanumeric() || *c == '_') || (*i == 0 && c.is_ascii_digit()))
            .map_or(r.len(), |(i, _)| i);
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(r[..len].to_string())
    }

    fn string(&mut self) -> Result<String, GraphQueryError> {
        self.skip_ws();
        let quote = match self.rest().chars().next() {
            Some(q @ ('\'' | '"')) => q,
            _ => return self.err("expected a string"),
        };
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((i, c)) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c if c == quote => {
                    self.pos += i + 1;
                    return Ok(out);
                }
                c => out.push(c),
            }
        }
        self.err("unterminated string")
    }

    fn node(&mut self) -> Result<NodePattern, GraphQueryError> {
        self.expect("(")?;
        let mut node = NodePattern { var: self.ident().unwrap_or_default(), ..NodePattern::default() };
        if self.eat(":") {
            node.node_type = Some(self.ident().map_or_else(|| self.err("expected a node label"), Ok)?);
        }
        if self.eat("{") {
            loop {
                let key = self.ident().map_or_else(|| self.err("expected a property name"), Ok)?;
                self.expect(":")?;
                let value = self.string()?;
                match key.as_str() {
                    "type" => node.node_type = Some(value),
                    "id" => node.id = Some(value),
                    other => return Err(GraphQueryError::UnsupportedFeature(format!("property `{other}`"))),
                }
                if self.eat("}") {
                    break;
                }
                self.expect(",")?;
            }
        }
        self.expect(")")?;
        Ok(node)
    }

    fn hop(&mut self) -> Result<Option<Hop>, GraphQueryError> {
        self.skip_ws();
        if self.rest().starts_with("<-") {
            return Err(GraphQueryError::UnsupportedFeature("incoming edges; use the `_reverse` edge type".into()));
        }
        let (edge_var, edge_type) = if self.eat("-->") {
            (None, None)
        } else if self.eat("-[") {
            let var = self.ident();
            let ty = if self.eat(":") {
                Some(self.ident().map_or_else(|| self.err("expected an edge type"), Ok)?)
            } else {
                None
            };
            if self.eat("*") {
                return Err(GraphQueryError::UnsupportedFeature("variable-length paths".into()));
            }
            self.expect("]")?;
            if !self.eat("->") {
                if self.eat("-") {
                    return Err(GraphQueryError::UnsupportedFeature("undirected edges".into()));
                }
                return self.err("expected `->`");
            }
            (var, ty)
        } else if self.eat("--") || self.eat("-") {
            return Err(GraphQueryError::UnsupportedFeature("undirected edges".into()));
        } else {
            return Ok(None);
        };
        let target = self.node()?;
        Ok(Some(Hop { edge_var, edge_type, target }))
    }
}

const UNSUPPORTED_CLAUSES: [&str; 10] =
    ["WHERE", "WITH", "ORDER", "LIMIT", "SKIP", "OPTIONAL", "UNWIND", "CREATE", "MERGE", "DISTINCT"];

/// Parses a query, optionally wrapped in a ```cypher fence.
pub fn parse_graph_query(text: &str) -> Result<GraphQuery, GraphQueryError> {
    let body = crate::agent::last_fenced_block(text).map_or(text, |(_, b)| b).trim();
    let body = body.strip_suffix(';').unwrap_or(body);
    let mut lx = Lexer { src: body, pos: 0 };
    if !lx.keyword("MATCH") {
        return lx.err("expected MATCH");
    }
    let source = lx.node()?;
    let hop = lx.hop()?;
    lx.skip_ws();
    if lx.rest().starts_with('-') || lx.rest().starts_with('<') {
        return Err(GraphQueryError::UnsupportedFeature("more than one hop".into()));
    }
    if lx.eat(",") {
        return Err(GraphQueryError::UnsupportedFeature("multiple patterns".into()));
    }
    for clause in UNSUPPORTED_CLAUSES {
        if lx.keyword(clause) {
            return Err(GraphQueryError::UnsupportedFeature(clause.to_string()));
        }
    }
    if !lx.keyword("RETURN") {
        return lx.err("expected RETURN");
    }
    if lx.keyword("DISTINCT") {
        return Err(GraphQueryError::UnsupportedFeature("DISTINCT".into()));
    }
    let mut vars = vec![source.var.clone()];
    if let Some(h) = &hop {
        vars.push(h.target.var.clone());
    }
    let mut projections = Vec::new();
    loop {
        let start = lx.pos;
        let var = match lx.ident() {
            Some(v) => v,
            None => return lx.err("expected a projection"),
        };
        if lx.eat("(") {
            return Err(GraphQueryError::UnsupportedFeature(format!("function `{var}`")));
        }
        if !vars.iter().any(|v| !v.is_empty() && *v == var) {
            if hop.as_ref().and_then(|h| h.edge_var.as_ref()) == Some(&var) {
                return Err(GraphQueryError::UnsupportedFeature("projecting edges".into()));
            }
            return Err(GraphQueryError::Syntax {
                position: start,
                reason: format!("`{var}` is not a node variable of the pattern"),
            });
        }
        let attribute = if lx.eat(".") {
            match lx.ident().as_deref() {
                Some("id") => Attribute::Id,
                Some("type") => Attribute::Type,
                Some(other) => return Err(GraphQueryError::UnsupportedFeature(format!("attribute `{other}`"))),
                None => return lx.err("expected an attribute"),
            }
        } else {
            Attribute::Id
        };
        if lx.keyword("AS") {
            return Err(GraphQueryError::UnsupportedFeature("aliases".into()));
        }
        projections.push(Projection { var, attribute });
        if !lx.eat(",") {
            break;
        }
    }
    lx.skip_ws();
    if !lx.rest().is_empty() {
        for clause in UNSUPPORTED_CLAUSES {
            if lx.keyword(clause) {
                return Err(GraphQueryError::UnsupportedFeature(clause.to_string()));
            }
        }
        return lx.err("unexpected trailing text");
    }
    Ok(GraphQuery { source, hop, projections })
}

fn node_matches(p: &NodePattern, node: &crate::store::Node) -> bool {
    p.node_type.as_ref().is_none_or(|t| *t == node.node_type) && p.id.as_ref().is_none_or(|i| *i == node.id)
}

/// Evaluates a query; rows follow node insertion order, then edge order.
pub fn run_graph_query(graph: &SchemaGraph, q: &GraphQuery) -> Result<QueryRows, GraphQueryError> {
    let columns = q.projections.iter().map(|p| format!("{}.{}", p.var, p.attribute)).collect();
    if let Some(t) = q.hop.as_ref().and_then(|h| h.edge_type.as_ref()) {
        if !graph.has_edge_type(t) {
            return Err(GraphQueryError::UnknownEdgeType(t.clone()));
        }
    }
    let nodes = graph.nodes();
    let project = |a: usize, b: Option<usize>| -> Vec<String> {
        q.projections
            .iter()
            .map(|p| {
                let n = if p.var == q.source.var { &nodes[a] } else { &nodes[b.expect("hop target bound")] };
                match p.attribute {
                    Attribute::Id => n.id.clone(),
                    Attribute::Type => n.node_type.clone(),
                }
            })
            .collect()
    };
    let mut rows = Vec::new();
    for (a, node) in nodes.iter().enumerate() {
        if !node_matches(&q.source, node) {
            continue;
        }
        match &q.hop {
            None => rows.push(project(a, None)),
            Some(h) => {
                for e in graph.out_edges(a) {
                    if h.edge_type.as_ref().is_none_or(|t| *t == e.edge_type) && node_matches(&h.target, &nodes[e.target]) {
                        rows.push(project(a, Some(e.target)));
                    }
                }
            }
        }
    }
    Ok(QueryRows { columns, rows })
}
