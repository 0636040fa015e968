//! Per-conversation state: named variables, chat history, the active bounding
//! box and immutable step snapshots.

use std::collections::HashMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::agent::ChatMessage;
use crate::analyzer::FilterResult;
use crate::geometry::SpatialOpSpec;
use crate::retriever::RetrievalTrace;
use crate::{BoundingBox, GeoSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Variable {
    GeoSet(GeoSet),
    BoundingBox(BoundingBox),
    Filter(FilterResult),
}

impl Variable {
    /// One-line summary shown to agents.
    pub fn describe(&self) -> String {
        match self {
            Variable::GeoSet(s) => format!("id_list with {} entities{}", s.len(), layer_summary(s)),
            Variable::BoundingBox(b) => format!("bounding box {:?}", b.to_array()),
            Variable::Filter(r) => format!(
                "geo_filter result: subject {} entities{}, object {} entities{}",
                r.subject.len(),
                layer_summary(&r.subject),
                r.object.len(),
                layer_summary(&r.object)
            ),
        }
    }

    pub fn layers(&self) -> Vec<Layer> {
        match self {
            Variable::GeoSet(s) => layers_of(s),
            Variable::BoundingBox(b) => vec![Layer {
                layer_name: "bounding box".into(),
                features: vec![Feature { key: "bounding_box".into(), wkt: b.to_wkt(), display_name: "bounding box".into() }],
            }],
            Variable::Filter(r) => merge_layers(layers_of(&r.subject), layers_of(&r.object)),
        }
    }
}

fn layer_summary(set: &GeoSet) -> String {
    let mut names: Vec<String> = Vec::new();
    for k in set.keys() {
        let l = k.layer();
        if !names.contains(&l) {
            names.push(l);
        }
    }
    if names.is_empty() {
        String::new()
    } else {
        format!(" ({})", names.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub key: String,
    pub wkt: String,
    pub display_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub layer_name: String,
    pub features: Vec<Feature>,
}

/// Groups features by `database/type` in first-seen order.
pub fn layers_of(set: &GeoSet) -> Vec<Layer> {
    let mut layers: IndexMap<String, Vec<Feature>> = IndexMap::new();
    for (key, geom) in set.iter() {
        layers.entry(key.layer()).or_default().push(Feature {
            key: key.to_string(),
            wkt: geom.to_wkt(),
            display_name: key.name.clone(),
        });
    }
    layers.into_iter().map(|(layer_name, features)| Layer { layer_name, features }).collect()
}

/// Concatenates layer lists, merging same-named layers without duplicate keys.
pub fn merge_layers(mut a: Vec<Layer>, b: Vec<Layer>) -> Vec<Layer> {
    for layer in b {
        match a.iter_mut().find(|l| l.layer_name == layer.layer_name) {
            Some(existing) => {
                for f in layer.features {
                    if !existing.features.iter().any(|e| e.key == f.key) {
                        existing.features.push(f);
                    }
                }
            }
            None => a.push(layer),
        }
    }
    a
}

/// What a plan step produced, frozen when the step finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSnapshot {
    pub step_id: String,
    /// 1-based position in its plan.
    pub index: usize,
    pub description: String,
    pub call: String,
    pub output_name: String,
    pub layers: Vec<Layer>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<RetrievalTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operation: Option<SpatialOpSpec>,
}

#[derive(Debug, Clone, Default)]
pub struct SessionState {
    pub id: String,
    pub variables: IndexMap<String, Variable>,
    pub history: Vec<ChatMessage>,
    pub bbox: Option<BoundingBox>,
    pub region_cache: HashMap<String, BoundingBox>,
    pub steps: IndexMap<String, StepSnapshot>,
    /// Variable holding the final output of the latest plan.
    pub last_result: Option<String>,
}

impl SessionState {
    pub fn new(id: impl Into<String>) -> Self {
        Self { id: id.into(), ..Self::default() }
    }

    /// Binds or rebinds a variable.
    pub fn bind(&mut self, name: &str, value: Variable) {
        self.variables.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Variable> {
        self.variables.get(name)
    }

    /// Stores a finished step; an id is never overwritten.
    pub fn record_step(&mut self, snapshot: StepSnapshot) {
        self.steps.entry(snapshot.step_id.clone()).or_insert(snapshot);
    }

    /// `name: description` lines for agent prompts.
    pub fn describe_variables(&self) -> String {
        if self.variables.is_empty() {
            return "none (no prior results in this session)".into();
        }
        self.variables.iter().map(|(k, v)| format!("- {k}: {}", v.describe())).collect::<Vec<_>>().join("\n")
    }

    /// The last `n` user/assistant exchanges.
    pub fn recent_exchanges(&self, n: usize) -> Vec<ChatMessage> {
        let start = self.history.len().saturating_sub(2 * n);
        self.history[start..].to_vec()
    }
}
