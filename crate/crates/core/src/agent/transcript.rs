use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AgentError, AgentRole, ChatBackend, CompletionRequest, CompletionResponse, TokenUsage};
use crate::text::collapse_ws;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("cannot read transcript {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid transcript {path}: {source}")]
    Parse { path: String, source: serde_json::Error },
    #[error("transcript entry {index} in {path} has neither input nor input_digest")]
    MissingKey { path: String, index: usize },
    #[error("transcript entry {index} in {path}: digest does not match its input")]
    DigestMismatch { path: String, index: usize },
}

/// Whitespace-normalized user content used for keying.
pub fn normalize_input(text: &str) -> String {
    collapse_ws(text)
}

/// Hex SHA-256 of the normalized input.
pub fn input_digest(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_input(text).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: AgentRole,
    #[serde(default)]
    pub input_digest: String,
    /// Optional plain input kept alongside the digest for readability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub response: String,
    #[serde(default)]
    pub usage: TokenUsage,
}

impl TranscriptEntry {
    pub fn new(role: AgentRole, input: &str, response: impl Into<String>, usage: TokenUsage) -> Self {
        Self {
            role,
            input_digest: input_digest(input),
            input: Some(normalize_input(input)),
            response: response.into(),
            usage,
        }
    }
}

/// Recorded agent responses keyed by `(role, input digest)`. Later entries
/// replace earlier ones with the same key.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    index: HashMap<(AgentRole, String), usize>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, entry: TranscriptEntry) {
        let key = (entry.role, entry.input_digest.clone());
        match self.index.get(&key) {
            Some(&i) => self.entries[i] = entry,
            None => {
                self.index.insert(key, self.entries.len());
                self.entries.push(entry);
            }
        }
    }

    pub fn extend(&mut self, other: Transcript) {
        for e in other.entries {
            self.push(e);
        }
    }

    pub fn get(&self, role: AgentRole, digest: &str) -> Option<&TranscriptEntry> {
        self.index.get(&(role, digest.to_string())).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self, TranscriptError> {
        let raw: Vec<TranscriptEntry> = serde_json::from_str(text).map_err(|source| TranscriptError::Parse {
            path: origin.to_string(),
            source,
        })?;
        let mut t = Transcript::new();
        for (index, mut e) in raw.into_iter().enumerate() {
            match (&e.input, e.input_digest.is_empty()) {
                (None, true) => return Err(TranscriptError::MissingKey { path: origin.into(), index }),
                (Some(input), true) => e.input_digest = input_digest(input),
                (Some(input), false) if input_digest(input) != e.input_digest => {
                    return Err(TranscriptError::DigestMismatch { path: origin.into(), index })
                }
                _ => {}
            }
            t.push(e);
        }
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("transcript serializes")
    }

    /// Loads a single file, or every `*.json` file of a directory in name order.
    pub fn load(path: &Path) -> Result<Self, TranscriptError> {
        let io = |source| TranscriptError::Io { path: path.display().to_string(), source };
        let mut files = Vec::new();
        if path.is_dir() {
            for entry in std::fs::read_dir(path).map_err(io)? {
                let p = entry.map_err(io)?.path();
                if p.extension().is_some_and(|e| e == "json") {
                    files.push(p);
                }
            }
            files.sort();
        } else {
            files.push(path.to_path_buf());
        }
        let mut t = Transcript::new();
        for f in files {
            let text = std::fs::read_to_string(&f).map_err(|source| TranscriptError::Io {
                path: f.display().to_string(),
                source,
            })?;
            t.extend(Transcript::from_json(&text, &f.display().to_string())?);
        }
        Ok(t)
    }
}

/// Replays a transcript; unknown inputs are reported with their normalized
/// text so missing entries can be authored.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    transcript: Transcript,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        Self { transcript }
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResponse, AgentError> {
        let digest = input_digest(&req.user_content);
        match self.transcript.get(req.role, &digest) {
            Some(e) => Ok(CompletionResponse { text: e.response.clone(), usage: e.usage }),
            None => Err(AgentError::TranscriptMiss {
                role: req.role,
                digest,
                input: normalize_input(&req.user_content),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_ignores_whitespace_layout() {
        assert_eq!(input_digest("a  b\n c "), input_digest("a b c"));
        assert_ne!(input_digest("a b c"), input_digest("a bc"));
        assert_eq!(input_digest("").len(), 64);
    }

    #[test]
    fn loads_entries_with_input_only() {
        let text = r#"[{"role": "router", "input": "hello   world", "response": "x", "usage": {"input_tokens": 3, "output_tokens": 1}}]"#;
        let t = Transcript::from_json(text, "inline").unwrap();
        let e = t.get(AgentRole::Router, &input_digest("hello world")).unwrap();
        assert_eq!(e.response, "x");
        assert_eq!(e.usage, TokenUsage::new(3, 1));
    }

    #[test]
    fn rejects_mismatched_digest() {
        let text = r#"[{"role": "router", "input": "a", "input_digest": "00", "response": "x"}]"#;
        assert!(matches!(Transcript::from_json(text, "inline"), Err(TranscriptError::DigestMismatch { .. })));
    }
}
