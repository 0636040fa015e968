use geoqa_core::agent::{Ask, AgentError, AgentRole, Gateway};
use geoqa_core::geometry::{SpatialOpSpec, SpatialType};

use crate::case::{EntitySpec, EvalCase};

#[derive(Clone, Copy)]
pub enum ParaphraseMode<'a> {
    Template,
    /// Reworded by the paraphrasing agent; needs a live backend.
    Live { gateway: &'a Gateway, session: &'a str },
}

fn noun(e: &EntitySpec) -> String {
    match &e.category {
        None => geoqa_core::text::singularize(&e.table),
        Some(c) if e.table == "roads" && !c.ends_with("way") => format!("{c} road"),
        Some(c) => c.clone(),
    }
}

/// The entity as handed to the retriever: its type, plus `named …` when the
/// case fixes a name.
pub fn entity_text(e: &EntitySpec) -> String {
    match &e.name {
        Some(n) => format!("{} named {n}", noun(e)),
        None => noun(e),
    }
}

fn plural(word: &str) -> String {
    let (head, last) = match word.rsplit_once(' ') {
        Some((h, l)) => (format!("{h} "), l),
        None => (String::new(), word),
    };
    let p = if last.ends_with('s') || last.ends_with('x') || last.ends_with("ch") || last.ends_with("sh") {
        format!("{last}es")
    } else if last.ends_with('y') && !last.ends_with("ay") && !last.ends_with("ey") && !last.ends_with("oy") {
        format!("{}ies", &last[..last.len() - 1])
    } else {
        format!("{last}s")
    };
    head + &p
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

/// The relation wording the analyzer extracts and the modify agent reads.
pub fn relation_text(op: &SpatialOpSpec) -> String {
    let plain = match op.spatial_type {
        SpatialType::Contains => "contains".to_string(),
        SpatialType::Within => "within".to_string(),
        SpatialType::Intersects => "intersects".to_string(),
        SpatialType::Buffer => format!("within {} meters of", op.num.unwrap_or(0.0)),
    };
    if op.negation {
        match op.spatial_type {
            SpatialType::Buffer => format!("outside {} meters of", op.num.unwrap_or(0.0)),
            _ => format!("not {plain}"),
        }
    } else {
        plain
    }
}

fn verb(op: &SpatialOpSpec, singular: bool) -> String {
    let s = |one: &str, many: &str| if singular { one.to_string() } else { many.to_string() };
    let base = match op.spatial_type {
        SpatialType::Contains => s("that contains", "that contain"),
        SpatialType::Within => s("that lies within", "that lie within"),
        SpatialType::Intersects => s("that intersects", "that intersect"),
        SpatialType::Buffer => return relation_text(op),
    };
    if op.negation {
        base.replacen("that ", if singular { "that does not " } else { "that do not " }, 1)
            .replace("contains", "contain")
            .replace("lies", "lie")
            .replace("intersects", "intersect")
    } else {
        base
    }
}

/// Deterministic wording from a fixed grammar. Category and name strings
/// appear verbatim.
pub fn paraphrase_template(case: &EvalCase) -> String {
    let Some(subject) = case.entities.first() else {
        return String::new();
    };
    let singular = subject.name.is_some();
    let mut out = match &subject.name {
        Some(n) => format!("the {} named {n}", noun(subject)),
        None => plural(&noun(subject)),
    };
    for (i, rel) in case.relations.iter().enumerate() {
        let Some(object) = case.entities.get(rel.object) else { continue };
        let target = match &object.name {
            Some(n) => format!("the {} named {n}", noun(object)),
            None => {
                let n = noun(object);
                format!("{} {n}", article(&n))
            }
        };
        out.push_str(if i == 0 { " " } else { " and " });
        out.push_str(&verb(&rel.op, singular));
        out.push(' ');
        out.push_str(&target);
    }
    out
}

pub fn paraphrase(case: &EvalCase, mode: ParaphraseMode<'_>) -> Result<String, AgentError> {
    match mode {
        ParaphraseMode::Template => Ok(paraphrase_template(case)),
        ParaphraseMode::Live { gateway, session } => {
            let ask = Ask::new(AgentRole::Paraphraser, format!("request: {}", paraphrase_template(case)));
            Ok(gateway.ask(session, &ask)?.text.trim().trim_matches('"').to_string())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plurals() {
        assert_eq!(plural("clothes shop"), "clothes shops");
        assert_eq!(plural("bus"), "buses");
        assert_eq!(plural("pharmacy"), "pharmacies");
        assert_eq!(plural("recreation ground"), "recreation grounds");
    }
}
