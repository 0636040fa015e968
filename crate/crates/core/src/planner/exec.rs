use thiserror::Error;

use super::{Arg, Function, PlanStep, TaskPlan};
use crate::agent::{AgentError, Gateway};
use crate::analyzer::{classify_relation, geo_filter, AnalyzerError};
use crate::region::{RegionError, RegionSelector};
use crate::retriever::{EntityRetriever, RetrieveError};
use crate::session::{SessionState, StepSnapshot, Variable};
use crate::{BoundingBox, GeoSet};

/// Modules a plan can call into.
pub struct Toolkit<'a> {
    pub gateway: &'a Gateway,
    pub retriever: &'a EntityRetriever,
    pub regions: &'a RegionSelector,
}

pub type StepOutcome = StepSnapshot;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("step {index} ({description}) failed: {cause}")]
    StepFailed { index: usize, description: String, cause: String },
    /// The agent backend itself failed; not a problem of the plan.
    #[error(transparent)]
    Agent(AgentError),
}

enum Failure {
    Backend(AgentError),
    Step(String),
}

impl From<AgentError> for Failure {
    fn from(e: AgentError) -> Self {
        if e.is_backend_failure() {
            Failure::Backend(e)
        } else {
            Failure::Step(e.to_string())
        }
    }
}

impl From<RetrieveError> for Failure {
    fn from(e: RetrieveError) -> Self {
        match e {
            RetrieveError::Agent(a) => a.into(),
            other => Failure::Step(other.to_string()),
        }
    }
}

impl From<RegionError> for Failure {
    fn from(e: RegionError) -> Self {
        match e {
            RegionError::Agent(a) => a.into(),
            other => Failure::Step(other.to_string()),
        }
    }
}

impl From<AnalyzerError> for Failure {
    fn from(e: AnalyzerError) -> Self {
        match e {
            AnalyzerError::Agent(a) => a.into(),
            other => Failure::Step(other.to_string()),
        }
    }
}

fn geoset_arg(session: &SessionState, arg: &Arg) -> Result<GeoSet, Failure> {
    let missing = |v: &str| Failure::Step(format!("unknown variable `{v}`"));
    match arg {
        Arg::Var(v) => match session.get(v).ok_or_else(|| missing(v))? {
            Variable::GeoSet(s) => Ok(s.clone()),
            Variable::Filter(_) => {
                Err(Failure::Step(format!("`{v}` is a geo_filter result; use {v}['subject'] or {v}['object']")))
            }
            Variable::BoundingBox(_) => Err(Failure::Step(format!("`{v}` is a bounding box, not an id_list"))),
        },
        Arg::Field { var, field } => match session.get(var).ok_or_else(|| missing(var))? {
            Variable::Filter(r) if field == "subject" => Ok(r.subject.clone()),
            Variable::Filter(r) if field == "object" => Ok(r.object.clone()),
            _ => Err(Failure::Step(format!("`{var}['{field}']` is not a geo_filter field"))),
        },
        other => Err(Failure::Step(format!("expected an id_list, got {other}"))),
    }
}

fn string_arg(arg: &Arg) -> &str {
    match arg {
        Arg::Str(s) => s,
        _ => "",
    }
}

fn run_step(step: &PlanStep, index: usize, session: &mut SessionState, kit: &Toolkit<'_>) -> Result<StepSnapshot, Failure> {
    let mut snapshot = StepSnapshot {
        step_id: uuid::Uuid::new_v4().to_string(),
        index,
        description: step.description.clone(),
        call: step.call.to_string(),
        output_name: step.output_name.clone(),
        layers: Vec::new(),
        trace: None,
        operation: None,
    };
    let args = &step.call.args;
    let value = match step.call.function {
        Function::SetBoundingBox => {
            let sid = session.id.clone();
            let bbox = kit.regions.resolve_region(kit.gateway, &sid, string_arg(&args[0]), &mut session.region_cache)?;
            session.bbox = bbox;
            let v = Variable::BoundingBox(bbox.unwrap_or_else(BoundingBox::world));
            if bbox.is_some() {
                snapshot.layers = v.layers();
            }
            v
        }
        Function::IdListOfEntity => {
            let found = kit.retriever.retrieve(kit.gateway, &session.id, string_arg(&args[0]), session.bbox.as_ref())?;
            snapshot.trace = Some(found.trace);
            Variable::GeoSet(found.geometries)
        }
        Function::GeoFilter => {
            let subject = geoset_arg(session, &args[1])?;
            let object = geoset_arg(session, &args[2])?;
            let spec = classify_relation(kit.gateway, &session.id, string_arg(&args[0]))?;
            snapshot.operation = Some(spec);
            Variable::Filter(geo_filter(&spec, &subject, &object)?)
        }
        Function::Select => Variable::GeoSet(geoset_arg(session, &args[0])?),
    };
    if snapshot.layers.is_empty() && !matches!(value, Variable::BoundingBox(_)) {
        snapshot.layers = value.layers();
    }
    session.bind(&step.output_name, value);
    session.record_step(snapshot.clone());
    Ok(snapshot)
}

/// Runs the steps in order, binding outputs and snapshotting each one. The
/// first failure stops the plan; finished steps stay recorded in the session.
pub fn execute_plan(plan: &TaskPlan, session: &mut SessionState, kit: &Toolkit<'_>) -> Result<Vec<StepOutcome>, ExecError> {
    let mut done = Vec::with_capacity(plan.steps.len());
    for (i, step) in plan.steps.iter().enumerate() {
        match run_step(step, i + 1, session, kit) {
            Ok(s) => done.push(s),
            Err(Failure::Backend(e)) => return Err(ExecError::Agent(e)),
            Err(Failure::Step(cause)) => {
                tracing::info!(step = i + 1, %cause, "plan step failed");
                return Err(ExecError::StepFailed { index: i + 1, description: step.description.clone(), cause });
            }
        }
    }
    session.last_result = plan.steps.last().map(|s| s.output_name.clone());
    Ok(done)
}
