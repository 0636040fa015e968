use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{
    input_digest, render_prompt, AgentError, AgentRole, ChatMessage, CompletionRequest, CompletionResponse,
    TokenUsage,
};

pub type SessionId = str;

/// A chat-completion provider.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, AgentError>;
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_retries: 0, base_delay: Duration::ZERO }
    }
}

/// One answered request, as recorded for accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentCall {
    pub role: AgentRole,
    pub input_digest: String,
    pub usage: TokenUsage,
}

/// A request before its system prompt is rendered.
#[derive(Debug, Clone)]
pub struct Ask {
    pub role: AgentRole,
    pub slots: BTreeMap<&'static str, String>,
    pub user_content: String,
    pub context: Vec<ChatMessage>,
}

impl Ask {
    pub fn new(role: AgentRole, user_content: impl Into<String>) -> Self {
        Self { role, slots: BTreeMap::new(), user_content: user_content.into(), context: Vec::new() }
    }

    pub fn slot(mut self, name: &'static str, value: impl Into<String>) -> Self {
        self.slots.insert(name, value.into());
        self
    }

    pub fn context(mut self, context: Vec<ChatMessage>) -> Self {
        self.context = context;
        self
    }
}

/// Failure of a structured ask: either the backend failed or the content
/// stayed unusable after one re-ask.
#[derive(Debug)]
pub enum AskError<E> {
    Agent(AgentError),
    Content(E),
}

#[derive(Default)]
struct SessionLedger {
    usage: TokenUsage,
    calls: Vec<AgentCall>,
}

/// Shared entry point for every agent request. Retries transient failures
/// and keeps per-session token totals.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    sessions: Mutex<HashMap<String, SessionLedger>>,
}

const REASK_NOTE: &str = "Your previous reply could not be used";

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, retry: RetryPolicy) -> Self {
        Self { backend, retry, sessions: Mutex::new(HashMap::new()) }
    }

    /// Registers a session; a no-op when it already exists.
    pub fn open_session(&self, session: &SessionId) {
        self.sessions.lock().unwrap().entry(session.to_string()).or_default();
    }

    pub fn usage_report(&self, session: &SessionId) -> Result<TokenUsage, AgentError> {
        self.sessions
            .lock()
            .unwrap()
            .get(session)
            .map(|s| s.usage)
            .ok_or_else(|| AgentError::UnknownSession(session.to_string()))
    }

    pub fn calls(&self, session: &SessionId) -> Result<Vec<AgentCall>, AgentError> {
        self.sessions
            .lock()
            .unwrap()
            .get(session)
            .map(|s| s.calls.clone())
            .ok_or_else(|| AgentError::UnknownSession(session.to_string()))
    }

    /// Sends a fully formed request, retrying transient failures with
    /// exponential backoff.
    pub fn complete(&self, session: &SessionId, req: &CompletionRequest) -> Result<CompletionResponse, AgentError> {
        if !self.sessions.lock().unwrap().contains_key(session) {
            return Err(AgentError::UnknownSession(session.to_string()));
        }
        let mut attempt = 0;
        let response = loop {
            match self.backend.complete(req) {
                Ok(r) => break r,
                Err(e) if e.is_transient() && attempt < self.retry.max_retries => {
                    let delay = self.retry.base_delay * 2u32.saturating_pow(attempt);
                    tracing::warn!(role = %req.role, attempt, error = %e, "retrying agent request");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        let mut sessions = self.sessions.lock().unwrap();
        let ledger = sessions.entry(session.to_string()).or_default();
        ledger.usage += response.usage;
        ledger.calls.push(AgentCall {
            role: req.role,
            input_digest: input_digest(&req.user_content),
            usage: response.usage,
        });
        Ok(response)
    }

    /// Renders the role's prompt and sends the request at temperature zero.
    pub fn ask(&self, session: &SessionId, ask: &Ask) -> Result<CompletionResponse, AgentError> {
        let req = CompletionRequest {
            role: ask.role,
            system_prompt: render_prompt(ask.role, &ask.slots)?,
            user_content: ask.user_content.clone(),
            context: ask.context.clone(),
            temperature: 0.0,
        };
        self.complete(session, &req)
    }

    /// Asks and parses the reply; an unusable reply gets exactly one re-ask
    /// quoting the problem, after which the parse error is returned.
    pub fn ask_parsed<T, E: Display>(
        &self,
        session: &SessionId,
        ask: &Ask,
        parse: impl Fn(&str) -> Result<T, E>,
    ) -> Result<T, AskError<E>> {
        let first = self.ask(session, ask).map_err(AskError::Agent)?;
        let err = match parse(&first.text) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        tracing::debug!(role = %ask.role, error = %err, "re-asking agent");
        let mut context = ask.context.clone();
        context.push(ChatMessage::user(ask.user_content.clone()));
        context.push(ChatMessage::assistant(first.text));
        let retry = Ask {
            role: ask.role,
            slots: ask.slots.clone(),
            user_content: format!(
                "{}\n\n{REASK_NOTE}: {err}. Reply again and put the result in a fenced code block.",
                ask.user_content
            ),
            context,
        };
        let second = self.ask(session, &retry).map_err(AskError::Agent)?;
        parse(&second.text).map_err(AskError::Content)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: AtomicU32,
    }

    impl ChatBackend for Flaky {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResponse, AgentError> {
            if self.failures.load(Ordering::SeqCst) > 0 {
                self.failures.fetch_sub(1, Ordering::SeqCst);
                return Err(AgentError::BackendUnavailable("down".into()));
            }
            Ok(CompletionResponse { text: "ok".into(), usage: TokenUsage::new(100, 20) })
        }
    }

    fn gateway(failures: u32, retries: u32) -> Gateway {
        let backend = Arc::new(Flaky { failures: AtomicU32::new(failures) });
        Gateway::new(backend, RetryPolicy { max_retries: retries, base_delay: Duration::ZERO })
    }

    #[test]
    fn retries_transient_failures_up_to_limit() {
        let gw = gateway(2, 2);
        gw.open_session("s");
        assert_eq!(gw.ask("s", &Ask::new(AgentRole::Router, "x")).unwrap().text, "ok");
        let gw = gateway(3, 2);
        gw.open_session("s");
        assert!(matches!(gw.ask("s", &Ask::new(AgentRole::Router, "x")), Err(AgentError::BackendUnavailable(_))));
        assert_eq!(gw.usage_report("s").unwrap(), TokenUsage::default());
    }

    #[test]
    fn usage_is_additive_per_session() {
        let gw = gateway(0, 0);
        gw.open_session("a");
        gw.open_session("b");
        assert_eq!(gw.usage_report("a").unwrap(), TokenUsage::new(0, 0));
        gw.ask("a", &Ask::new(AgentRole::Router, "x")).unwrap();
        gw.ask("a", &Ask::new(AgentRole::Router, "y")).unwrap();
        assert_eq!(gw.usage_report("a").unwrap(), TokenUsage::new(200, 40));
        assert_eq!(gw.usage_report("b").unwrap(), TokenUsage::default());
        assert_eq!(gw.usage_report("zzz"), Err(AgentError::UnknownSession("zzz".into())));
    }
}
