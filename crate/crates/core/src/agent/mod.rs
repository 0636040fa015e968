//! Chat-completion gateway, prompt catalog, structured-output extraction and
//! scripted transcripts for offline runs.

mod gateway;
mod json;
mod live;
mod prompts;
mod transcript;

pub use gateway::{AgentCall, Ask, AskError, ChatBackend, Gateway, RetryPolicy, SessionId};
pub use json::{extract_json, last_fenced_block, lenient_json, JsonError};
pub use live::LiveBackend;
pub use prompts::{render_prompt, template, PLANNER_TOOLS};
pub use transcript::{input_digest, normalize_input, ScriptedBackend, Transcript, TranscriptEntry, TranscriptError};

use std::fmt;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Router,
    RelationAnalyzer,
    MissionPlanner,
    BboxModifier,
    IntentMatcher,
    QualityChecker,
    ImitationRewriter,
    ModifyAgent,
    Explainer,
    /// Rewords evaluation cases; not part of the query pipeline.
    Paraphraser,
}

impl AgentRole {
    pub const ALL: [AgentRole; 10] = [
        AgentRole::Router,
        AgentRole::RelationAnalyzer,
        AgentRole::MissionPlanner,
        AgentRole::BboxModifier,
        AgentRole::IntentMatcher,
        AgentRole::QualityChecker,
        AgentRole::ImitationRewriter,
        AgentRole::ModifyAgent,
        AgentRole::Explainer,
        AgentRole::Paraphraser,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentRole::Router => "router",
            AgentRole::RelationAnalyzer => "relation_analyzer",
            AgentRole::MissionPlanner => "mission_planner",
            AgentRole::BboxModifier => "bbox_modifier",
            AgentRole::IntentMatcher => "intent_matcher",
            AgentRole::QualityChecker => "quality_checker",
            AgentRole::ImitationRewriter => "imitation_rewriter",
            AgentRole::ModifyAgent => "modify_agent",
            AgentRole::Explainer => "explainer",
            AgentRole::Paraphraser => "paraphraser",
        }
    }
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AgentRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown agent role `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: "assistant".into(), content: content.into() }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub role: AgentRole,
    pub system_prompt: String,
    pub user_content: String,
    pub context: Vec<ChatMessage>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResponse {
    pub text: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl TokenUsage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Self { input_tokens, output_tokens }
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: Self) -> Self {
        TokenUsage::new(self.input_tokens + rhs.input_tokens, self.output_tokens + rhs.output_tokens)
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("agent backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("agent backend rate limited")]
    RateLimited,
    #[error("agent backend rejected the request with status {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("no transcript entry for {role} with input digest {digest}; normalized input: {input}")]
    TranscriptMiss { role: AgentRole, digest: String, input: String },
    #[error("prompt template for {role} is missing slot `{slot}`")]
    MissingSlot { role: AgentRole, slot: String },
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("{role} returned unusable output after a re-ask: {reason}")]
    MalformedOutput { role: AgentRole, reason: String },
}

impl AgentError {
    /// Failures of the backend itself rather than of the model's content.
    pub fn is_backend_failure(&self) -> bool {
        matches!(
            self,
            AgentError::BackendUnavailable(_)
                | AgentError::RateLimited
                | AgentError::Rejected { .. }
                | AgentError::TranscriptMiss { .. }
        )
    }

    pub(crate) fn is_transient(&self) -> bool {
        matches!(self, AgentError::BackendUnavailable(_) | AgentError::RateLimited)
    }
}
