use std::sync::Arc;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use geoqa_core::agent::{Gateway, RetryPolicy};
use geoqa_core::engine::{Engine, EngineConfig};
use geoqa_core::region::Geocoder;
use geoqa_core::store::KnowledgeStore;
use geoqa_eval::{
    evaluate, generate_cases, keyword_suite, paraphrase, run_keyword_suite, tier_config, OracleAgent,
    ParaphraseMode, Report,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalAgent {
    /// Agents answered from the cases themselves; exercises everything else.
    #[default]
    Oracle,
    /// The configured engine and its backend.
    Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wording {
    #[default]
    Template,
    Live,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub seed: u64,
    pub cases_per_tier: usize,
    pub tiers: Vec<u8>,
    pub agent: EvalAgent,
    pub paraphrase: Wording,
    /// Size of the exact-keyword retrieval suite; 0 skips it.
    pub keyword_queries: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            cases_per_tier: 10,
            tiers: vec![1, 2, 3, 4],
            agent: EvalAgent::Oracle,
            paraphrase: Wording::Template,
            keyword_queries: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalOutput {
    pub tasks: Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keyword: Option<Report>,
}

/// Generates the configured tiers over `store`, runs them and the keyword
/// suite. `engine` is required for the engine agent and live wording.
pub fn run(
    config: &EvalConfig,
    store: Arc<KnowledgeStore>,
    geocoder: Box<dyn Geocoder>,
    engine: Option<&Engine>,
) -> anyhow::Result<EvalOutput> {
    let mut cases = Vec::new();
    for &tier in &config.tiers {
        let gen = tier_config(tier, config.cases_per_tier, config.seed.wrapping_add(tier as u64))
            .with_context(|| format!("unknown tier {tier}; tiers are 1 to 4"))?;
        cases.extend(generate_cases(&store, &gen)?);
    }
    if config.paraphrase == Wording::Live {
        let engine = engine.context("live wording needs a live engine")?;
        engine.gateway().open_session("paraphrase");
        for case in &mut cases {
            case.nl_query = paraphrase(case, ParaphraseMode::Live { gateway: engine.gateway(), session: "paraphrase" })?;
        }
    }
    let oracle_engine;
    let runner = match config.agent {
        EvalAgent::Engine => engine.context("the engine agent needs a configured engine")?,
        EvalAgent::Oracle => {
            let gateway = Gateway::new(Arc::new(OracleAgent::new(&cases)), RetryPolicy::none());
            oracle_engine = Engine::new(Arc::new(gateway), store.clone(), geocoder, EngineConfig::default());
            &oracle_engine
        }
    };
    let tasks = evaluate(runner, &cases);
    let keyword = match config.keyword_queries {
        0 => None,
        n => Some(run_keyword_suite(runner.retriever(), &keyword_suite(&store, n, config.seed)?)),
    };
    Ok(EvalOutput { tasks, keyword })
}
