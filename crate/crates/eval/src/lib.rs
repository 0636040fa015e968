//! Evaluation protocol at desk scale: seeded query cases over the fixture
//! city, ground truth by exhaustive geometry checks, and metrics.

mod agent;
mod case;
mod keyword;
mod metrics;
mod phrase;

pub use agent::OracleAgent;
pub use case::{generate_cases, oracle, tier_config, CaseRelation, EntitySpec, EvalCase, GenConfig};
pub use keyword::{keyword_suite, run_keyword_suite, KeywordQuery};
pub use metrics::{evaluate, CaseOutcome, Metrics, Report, TierReport};
pub use phrase::{entity_text, paraphrase, paraphrase_template, relation_text, ParaphraseMode};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("found only {found} of {wanted} valid cases in the loaded data")]
    InsufficientData { wanted: usize, found: usize },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Agent(#[from] geoqa_core::agent::AgentError),
}
