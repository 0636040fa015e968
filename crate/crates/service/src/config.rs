use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use geoqa_core::agent::{ChatBackend, Gateway, LiveBackend, RetryPolicy, ScriptedBackend, Transcript};
use geoqa_core::engine::{Engine, EngineConfig};
use geoqa_core::fixtures;
use geoqa_core::region::{FixtureGeocoder, Geocoder, HttpGeocoder};
use geoqa_core::retriever::RetrieverConfig;
use geoqa_core::store::{Embedder, HttpEmbedder, KnowledgeStore, TrigramEmbedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    #[default]
    Scripted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
}

impl Default for LlmConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeocoderConfig {
    pub base_url: String,
    pub user_agent: String,
    pub timeout_secs: u64,
    /// Answers place lookups from a JSON file instead of the network.
    pub fixture: Option<PathBuf>,
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        Self {
            base_url: "https://nominatim.openstreetmap.org".into(),
            user_agent: concat!("geoqa/", env!("CARGO_PKG_VERSION")).into(),
            timeout_secs: 10,
            fixture: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    #[default]
    Trigram,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    pub base_url: String,
    pub model: String,
    pub dim: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            kind: EmbeddingKind::Trigram,
            base_url: "https://api.openai.com/v1".into(),
            model: "text-embedding-3-small".into(),
            dim: 1536,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub host: String,
    pub port: u16,
    /// Store snapshot directory; loaded at start and rewritten after uploads.
    pub data_dir: Option<PathBuf>,
    pub mode: Mode,
    /// Transcript file or directory replayed in scripted mode.
    pub transcripts: Option<PathBuf>,
    pub context_exchanges: usize,
    pub llm: LlmConfig,
    pub geocoder: GeocoderConfig,
    pub embedding: EmbeddingConfig,
    pub retriever: RetrieverConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir: None,
            mode: Mode::Scripted,
            transcripts: None,
            context_exchanges: 3,
            llm: LlmConfig::default(),
            geocoder: GeocoderConfig::default(),
            embedding: EmbeddingConfig::default(),
            retriever: RetrieverConfig::default(),
        }
    }
}

impl Config {
    /// Reads the TOML file when given, then applies `GEOQA_*` overrides.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> anyhow::Result<()> {
        if let Some(v) = get("GEOQA_HOST") {
            self.host = v;
        }
        if let Some(v) = get("GEOQA_PORT") {
            self.port = v.parse().with_context(|| format!("GEOQA_PORT `{v}` is not a port"))?;
        }
        if let Some(v) = get("GEOQA_DATA_DIR") {
            self.data_dir = Some(v.into());
        }
        if let Some(v) = get("GEOQA_MODE") {
            self.mode = match v.as_str() {
                "live" => Mode::Live,
                "scripted" => Mode::Scripted,
                _ => bail!("GEOQA_MODE must be `live` or `scripted`, got `{v}`"),
            };
        }
        if let Some(v) = get("GEOQA_TRANSCRIPTS") {
            self.transcripts = Some(v.into());
        }
        if let Some(v) = get("GEOQA_LLM_BASE_URL") {
            self.llm.base_url = v;
        }
        if let Some(v) = get("GEOQA_LLM_MODEL") {
            self.llm.model = v;
        }
        if let Some(v) = get("GEOQA_GEOCODER_URL") {
            self.geocoder.base_url = v;
        }
        Ok(())
    }

    fn embedder(&self) -> anyhow::Result<Arc<dyn Embedder>> {
        Ok(match self.embedding.kind {
            EmbeddingKind::Trigram => Arc::new(TrigramEmbedder),
            EmbeddingKind::Http => Arc::new(HttpEmbedder::new(
                &self.embedding.base_url,
                std::env::var(&self.llm.api_key_env).ok(),
                &self.embedding.model,
                self.embedding.dim,
                Duration::from_secs(self.llm.timeout_secs),
            )?),
        })
    }

    /// The store from `data_dir`, or an empty one.
    pub fn open_store(&self) -> anyhow::Result<KnowledgeStore> {
        let embedder = self.embedder()?;
        Ok(match &self.data_dir {
            Some(dir) => KnowledgeStore::load(dir, embedder).with_context(|| format!("loading {}", dir.display()))?,
            None => KnowledgeStore::new(embedder),
        })
    }

    fn backend(&self) -> anyhow::Result<Arc<dyn ChatBackend>> {
        Ok(match self.mode {
            Mode::Live => Arc::new(LiveBackend::new(
                &self.llm.base_url,
                std::env::var(&self.llm.api_key_env).ok(),
                &self.llm.model,
                Duration::from_secs(self.llm.timeout_secs),
            )?),
            Mode::Scripted => {
                let transcript = match &self.transcripts {
                    Some(p) => Transcript::load(p)?,
                    None => Transcript::new(),
                };
                Arc::new(ScriptedBackend::new(transcript))
            }
        })
    }

    fn retry(&self) -> RetryPolicy {
        match self.mode {
            Mode::Live => RetryPolicy { max_retries: self.llm.max_retries, ..RetryPolicy::default() },
            Mode::Scripted => RetryPolicy::none(),
        }
    }

    fn geocoder(&self) -> anyhow::Result<Box<dyn Geocoder>> {
        Ok(match &self.geocoder.fixture {
            Some(p) => Box::new(FixtureGeocoder::load(p)?),
            None => Box::new(HttpGeocoder::new(
                &self.geocoder.base_url,
                &self.geocoder.user_agent,
                Duration::from_secs(self.geocoder.timeout_secs),
            )?),
        })
    }

    fn engine_config(&self) -> EngineConfig {
        EngineConfig { retriever: self.retriever, context_exchanges: self.context_exchanges }
    }

    pub fn build_engine(&self) -> anyhow::Result<Engine> {
        let gateway = Gateway::new(self.backend()?, self.retry());
        Ok(Engine::new(Arc::new(gateway), Arc::new(self.open_store()?), self.geocoder()?, self.engine_config()))
    }

    /// The offline bundle: fixture city, geocoder and transcripts. Extra
    /// transcripts from the config are layered on top.
    pub fn build_fixture_engine(&self) -> anyhow::Result<Engine> {
        let mut transcript = fixtures::transcript()?;
        if let Some(p) = &self.transcripts {
            transcript.extend(Transcript::load(p)?);
        }
        let gateway = Gateway::new(Arc::new(ScriptedBackend::new(transcript)), RetryPolicy::none());
        Ok(Engine::new(
            Arc::new(gateway),
            fixtures::city_store(),
            Box::new(fixtures::geocoder()),
            self.engine_config(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let mut c = Config::default();
        c.apply_env(|k| match k {
            "GEOQA_PORT" => Some("9001".into()),
            "GEOQA_MODE" => Some("live".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!((c.port, c.mode), (9001, Mode::Live));
        assert!(c.apply_env(|k| (k == "GEOQA_MODE").then(|| "dry".into())).is_err());
    }

    #[test]
    fn toml_sections() {
        let c: Config = toml::from_str("port = 7000\nmode = \"live\"\n[llm]\nmodel = \"m\"\n").unwrap();
        assert_eq!((c.port, c.mode, c.llm.model.as_str()), (7000, Mode::Live, "m"));
        assert!(toml::from_str::<Config>("prot = 1").is_err());
    }
}
