use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    #[serde(rename = "type")]
    pub node_type: String,
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub edge_type: String,
    /// Node positions.
    pub source: usize,
    pub target: usize,
}

/// Materialized schema graph: databases, tables and column values as nodes,
/// each link stored once forward and once as `<type>_reverse`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    lookup: HashMap<(String, String), usize>,
    edge_set: HashSet<(String, usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<Node>,
    links: Vec<Edge>,
}

impl SchemaGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the position of the node, adding it when new.
    pub fn add_node(&mut self, node_type: &str, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(&(node_type.to_string(), id.to_string())) {
            return i;
        }
        self.nodes.push(Node { node_type: node_type.into(), id: id.into() });
        let i = self.nodes.len() - 1;
        self.lookup.insert((node_type.into(), id.into()), i);
        i
    }

    /// Adds `source -> target` and its reverse, typed after the node types.
    pub fn link(&mut self, source: usize, target: usize) {
        let forward = format!("{}_{}", self.nodes[source].node_type, self.nodes[target].node_type);
        let reverse = format!("{forward}_reverse");
        self.push_edge(forward, source, target);
        self.push_edge(reverse, target, source);
    }

    fn push_edge(&mut self, edge_type: String, source: usize, target: usize) {
        if self.edge_set.insert((edge_type.clone(), source, target)) {
            self.edges.push(Edge { edge_type, source, target });
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn find(&self, node_type: &str, id: &str) -> Option<usize> {
        self.lookup.get(&(node_type.to_string(), id.to_string())).copied()
    }

    pub fn has_edge_type(&self, edge_type: &str) -> bool {
        self.edges.iter().any(|e| e.edge_type == edge_type)
    }

    /// Targets of `edge_type` edges leaving `source`, in edge order.
    pub fn neighbors<'a>(&'a self, source: usize, edge_type: &'a str) -> impl Iterator<Item = usize> + 'a {
        self.edges
            .iter()
            .filter(move |e| e.source == source && e.edge_type == edge_type)
            .map(|e| e.target)
    }

    pub fn out_edges(&self, source: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.source == source)
    }

    /// Database owning a table node.
    pub fn database_of(&self, table: &str) -> Option<&str> {
        let t = self.find("table", table)?;
        self.neighbors(t, "database_table_reverse").next().map(|d| self.nodes[d].id.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphFile { nodes: self.nodes.clone(), links: self.edges.clone() })
            .expect("graph serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let file: GraphFile = serde_json::from_str(text)?;
        let mut g = SchemaGraph::new();
        for n in &file.nodes {
            g.add_node(&n.node_type, &n.id);
        }
        for e in file.links {
            if e.source >= g.nodes.len() || e.target >= g.nodes.len() {
                return Err(serde::de::Error::custom("edge references a missing node"));
            }
            g.push_edge(e.edge_type, e.source, e.target);
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn links_are_mirrored() {
        let mut g = SchemaGraph::new();
        let d = g.add_node("database", "land");
        let t = g.add_node("table", "area");
        g.link(d, t);
        g.link(d, t);
        assert_eq!(g.edges().len(), 2);
        assert_eq!(g.neighbors(d, "database_table").collect::<Vec<_>>(), [t]);
        assert_eq!(g.neighbors(t, "database_table_reverse").collect::<Vec<_>>(), [d]);
        assert_eq!(g.database_of("area"), Some("land"));
        let back = SchemaGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}
