use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use geoqa_core::geometry::{relate, SpatialOpSpec, SpatialType};
use geoqa_core::store::{FeatureRow, KnowledgeStore, StoreState};

use crate::phrase::paraphrase_template;
use crate::EvalError;

/// A queried entity: rows of `table`, optionally narrowed to a category and
/// a name. Without a category the whole table is meant.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntitySpec {
    pub table: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl EntitySpec {
    pub fn matches(&self, table: &str, row: &FeatureRow) -> bool {
        table == self.table
            && self.category.as_ref().is_none_or(|c| row.category.as_ref() == Some(c))
            && self.name.as_ref().is_none_or(|n| &row.name == n)
    }
}

/// `entities[subject] <op> entities[object]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRelation {
    pub subject: usize,
    pub object: usize,
    pub op: SpatialOpSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub tier: u8,
    pub entities: Vec<EntitySpec>,
    pub relations: Vec<CaseRelation>,
    pub nl_query: String,
    pub truth_keys: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_entities: usize,
    pub named: bool,
    pub count: usize,
    pub seed: u64,
}

/// The four difficulty tiers: two entities without and with names, then
/// three and four named entities.
pub fn tier_config(tier: u8, count: usize, seed: u64) -> Option<GenConfig> {
    let (n_entities, named) = match tier {
        1 => (2, false),
        2 => (2, true),
        3 => (3, true),
        4 => (4, true),
        _ => return None,
    };
    Some(GenConfig { n_entities, named, count, seed })
}

fn tier_of(config: &GenConfig) -> u8 {
    match (config.n_entities, config.named) {
        (2, false) => 1,
        (2, true) => 2,
        (3, _) => 3,
        (4, _) => 4,
        _ => 0,
    }
}

struct Row<'a> {
    table: &'a str,
    row: &'a FeatureRow,
}

/// Rows usable as query entities. Categories shared by several tables are
/// left out since their plain wording is ambiguous; soil codes are not
/// something users ask for by name.
fn eligible<'a>(state: &'a StoreState, named: bool) -> Vec<Row<'a>> {
    let mut tables_of: HashMap<&str, HashSet<&str>> = HashMap::new();
    for t in state.tables() {
        for r in &t.rows {
            if let Some(c) = &r.category {
                tables_of.entry(c.as_str()).or_default().insert(t.name.as_str());
            }
        }
    }
    let mut out = Vec::new();
    for t in state.tables().filter(|t| t.name != "soil") {
        for r in &t.rows {
            let unambiguous = r.category.as_ref().is_none_or(|c| tables_of[c.as_str()].len() == 1);
            if unambiguous && (!named || !r.name.is_empty()) {
                out.push(Row { table: &t.name, row: r });
            }
        }
    }
    out
}

fn spec_of(r: &Row<'_>, named: bool) -> EntitySpec {
    EntitySpec {
        table: r.table.to_string(),
        category: r.row.category.clone(),
        name: named.then(|| r.row.name.clone()),
    }
}

fn random_op(rng: &mut ChaCha8Rng) -> Vec<SpatialOpSpec> {
    let mut types = SpatialType::ALL.to_vec();
    types.shuffle(rng);
    let meters = *[100.0, 200.0, 500.0].choose(rng).expect("non-empty");
    types
        .into_iter()
        .map(|t| if t == SpatialType::Buffer { SpatialOpSpec::buffer(meters) } else { SpatialOpSpec::of(t) })
        .collect()
}

/// Seeded cases of one tier. Each case is built around a concrete subject
/// row so relations are satisfiable, then validated by [`oracle`]; cases with
/// empty ground truth or repeated wording are dropped.
pub fn generate_cases(store: &KnowledgeStore, config: &GenConfig) -> Result<Vec<EvalCase>, EvalError> {
    if config.n_entities < 2 {
        return Err(EvalError::InvalidConfig("a case needs at least two entities".into()));
    }
    let state = store.snapshot();
    let pool = eligible(&state, config.named);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cases = Vec::with_capacity(config.count);
    let mut seen = HashSet::new();
    let attempts = config.count * 200 + 1000;
    for _ in 0..attempts {
        if cases.len() == config.count || pool.is_empty() {
            break;
        }
        let subject = &pool[rng.random_range(0..pool.len())];
        let mut entities = vec![spec_of(subject, config.named)];
        let mut relations = Vec::new();
        for object in 1..config.n_entities {
            let mut found = None;
            for op in random_op(&mut rng) {
                let options: Vec<&Row<'_>> = pool
                    .iter()
                    .filter(|o| o.row.key != subject.row.key && !entities.contains(&spec_of(o, config.named)))
                    .filter(|o| relate(&subject.row.geometry, &o.row.geometry, &op).unwrap_or(false))
                    .collect();
                if let Some(o) = options.choose(&mut rng) {
                    found = Some((spec_of(o, config.named), op));
                    break;
                }
            }
            let Some((entity, op)) = found else { break };
            entities.push(entity);
            relations.push(CaseRelation { subject: 0, object, op });
        }
        if entities.len() < config.n_entities {
            continue;
        }
        let mut case = EvalCase {
            tier: tier_of(config),
            entities,
            relations,
            nl_query: String::new(),
            truth_keys: BTreeSet::new(),
        };
        case.nl_query = paraphrase_template(&case);
        if !seen.insert(case.nl_query.clone()) {
            continue;
        }
        case.truth_keys = oracle(&state, &case);
        if !case.truth_keys.is_empty() {
            cases.push(case);
        }
    }
    if cases.len() < config.count {
        return Err(EvalError::InsufficientData { wanted: config.count, found: cases.len() });
    }
    Ok(cases)
}

/// Ground truth by exhaustive pairwise checks: the subject rows of entity 0
/// that satisfy every relation against at least one matching object row.
/// No spatial index and no agents are involved.
pub fn oracle(state: &StoreState, case: &EvalCase) -> BTreeSet<String> {
    let rows_of = |e: &EntitySpec| -> Vec<&FeatureRow> {
        state
            .tables()
            .flat_map(|t| t.rows.iter().map(move |r| (t.name.as_str(), r)))
            .filter(|(t, r)| e.matches(t, r))
            .map(|(_, r)| r)
            .collect()
    };
    let Some(target) = case.entities.first() else {
        return BTreeSet::new();
    };
    let objects: Vec<Vec<&FeatureRow>> = case.entities.iter().map(rows_of).collect();
    rows_of(target)
        .into_iter()
        .filter(|s| {
            case.relations.iter().all(|rel| {
                let hit = objects[rel.object].iter().any(|o| {
                    let plain = SpatialOpSpec { negation: false, ..rel.op };
                    relate(&s.geometry, &o.geometry, &plain).unwrap_or(false)
                });
                hit != rel.op.negation
            })
        })
        .map(|s| s.key.to_string())
        .collect()
}
