use std::collections::BTreeMap;

use super::{AgentError, AgentRole};

/// Tool descriptions filled into the planner template's `{{tools}}` slot.
pub const PLANNER_TOOLS: &str = include_str!("../../prompts/mission_planner_tools.txt");

/// The raw template bound to a role. Slots are written `{{name}}`.
pub fn template(role: AgentRole) -> &'static str {
    match role {
        AgentRole::Router => include_str!("../../prompts/router.txt"),
        AgentRole::RelationAnalyzer => include_str!("../../prompts/relation_analyzer.txt"),
        AgentRole::MissionPlanner => include_str!("../../prompts/mission_planner.txt"),
        AgentRole::BboxModifier => include_str!("../../prompts/bbox_modifier.txt"),
        AgentRole::IntentMatcher => include_str!("../../prompts/intent_matcher.txt"),
        AgentRole::QualityChecker => include_str!("../../prompts/quality_checker.txt"),
        AgentRole::ImitationRewriter => include_str!("../../prompts/imitation_rewriter.txt"),
        AgentRole::ModifyAgent => include_str!("../../prompts/modify_agent.txt"),
        AgentRole::Explainer => include_str!("../../prompts/explainer.txt"),
        AgentRole::Paraphraser => include_str!("../../prompts/paraphraser.txt"),
    }
}

/// Substitutes every `{{slot}}` in the role's template. Extra slots are ignored.
pub fn render_prompt(role: AgentRole, slots: &BTreeMap<&str, String>) -> Result<String, AgentError> {
    let tpl = template(role);
    let mut out = String::with_capacity(tpl.len());
    let mut rest = tpl;
    while let Some(start) = rest.find("{{") {
        let Some(len) = rest[start + 2..].find("}}") else { break };
        let name = &rest[start + 2..start + 2 + len];
        let value = slots.get(name).ok_or_else(|| AgentError::MissingSlot {
            role,
            slot: name.to_string(),
        })?;
        out.push_str(&rest[..start]);
        out.push_str(value);
        rest = &rest[start + 4 + len..];
    }
    out.push_str(rest);
    Ok(out)
}
