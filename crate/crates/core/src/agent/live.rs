use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{AgentError, ChatBackend, ChatMessage, CompletionRequest, CompletionResponse, TokenUsage};

/// Chat-completion client for any endpoint speaking the common
/// `POST {base}/chat/completions` schema.
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl LiveBackend {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, timeout: Duration) -> Result<Self, AgentError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| AgentError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.to_string(),
        })
    }
}

impl ChatBackend for LiveBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, AgentError> {
        let mut messages = vec![ChatMessage::system(req.system_prompt.clone())];
        messages.extend(req.context.iter().cloned());
        messages.push(ChatMessage::user(req.user_content.clone()));
        let body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
        });
        let mut request = self.client.post(format!("{}/chat/completions", self.base_url)).json(&body);
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| AgentError::BackendUnavailable(e.to_string()))?;
        let status = response.status();
        if status.as_u16() == 429 {
            return Err(AgentError::RateLimited);
        }
        if status.is_server_error() {
            return Err(AgentError::BackendUnavailable(format!("status {status}")));
        }
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            return Err(AgentError::Rejected { status: status.as_u16(), body });
        }
        let wire: WireResponse = response
            .json()
            .map_err(|e| AgentError::BackendUnavailable(format!("unreadable response: {e}")))?;
        let text = wire
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| AgentError::BackendUnavailable("response without choices".into()))?;
        let usage = wire
            .usage
            .map(|u| TokenUsage::new(u.prompt_tokens, u.completion_tokens))
            .unwrap_or_default();
        Ok(CompletionResponse { text, usage })
    }
}
