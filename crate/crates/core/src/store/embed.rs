use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::text::collapse_ws;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding backend unavailable: {0}")]
    BackendUnavailable(String),
}

/// Maps text to a unit-norm vector of fixed dimension.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
    fn dim(&self) -> usize;
    /// Identifies the model so persisted vectors are not mixed across models.
    fn model_id(&self) -> String;
}

pub const TRIGRAM_DIM: usize = 256;

/// Deterministic character-trigram hash embedding: lowercased,
/// whitespace-collapsed text padded with one space on each side, every
/// trigram counted into a SHA-256 selected bucket, then L2-normalized.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrigramEmbedder;

impl TrigramEmbedder {
    pub fn bucket(trigram: &str) -> usize {
        let h = Sha256::digest(trigram.as_bytes());
        let v = u64::from_le_bytes(h[..8].try_into().expect("8 bytes"));
        (v % TRIGRAM_DIM as u64) as usize
    }
}

impl Embedder for TrigramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let norm = collapse_ws(&text.to_lowercase());
        if norm.is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let chars: Vec<char> = format!(" {norm} ").chars().collect();
        let mut counts = vec![0f64; TRIGRAM_DIM];
        for w in chars.windows(3) {
            let tri: String = w.iter().collect();
            counts[Self::bucket(&tri)] += 1.0;
        }
        Ok(unit(&counts))
    }

    fn dim(&self) -> usize {
        TRIGRAM_DIM
    }

    fn model_id(&self) -> String {
        format!("trigram-hash-{TRIGRAM_DIM}")
    }
}

fn unit(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return v.iter().map(|_| 0.0).collect();
    }
    v.iter().map(|x| (x / n) as f32).collect()
}

pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum()
}

/// Client for `POST {base}/embeddings` endpoints returning `data[0].embedding`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: Option<String>,
    model: String,
    dim: usize,
}

#[derive(Deserialize)]
struct WireEmbeddings {
    data: Vec<WireEmbedding>,
}

#[derive(Deserialize)]
struct WireEmbedding {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str, dim: usize, timeout: Duration) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            dim,
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.trim().is_empty() {
            return Err(EmbedError::EmptyText);
        }
        let mut req = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .json(&json!({"model": self.model, "input": text}));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(EmbedError::BackendUnavailable(format!("status {}", resp.status())));
        }
        let wire: WireEmbeddings = resp.json().map_err(|e| EmbedError::BackendUnavailable(e.to_string()))?;
        let v = wire
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::BackendUnavailable("empty embedding response".into()))?
            .embedding;
        if v.len() != self.dim {
            return Err(EmbedError::BackendUnavailable(format!(
                "expected {} dimensions, got {}",
                self.dim,
                v.len()
            )));
        }
        Ok(unit(&v))
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn model_id(&self) -> String {
        format!("{}-{}", self.model, self.dim)
    }
}
