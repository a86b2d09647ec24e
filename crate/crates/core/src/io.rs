//! Text file formats: model, policy, measure, state-set, cost and
//! constraint documents. All are JSON; numbers are written in the shortest
//! form that reads back to the same double.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::Relation;
use crate::measure::{StateActionMeasure, StateMeasure, StateSet};
use crate::model::{validate_model, Model, ModelDocument};
use crate::planner::{PairValues, PlanConstraint};
use crate::policy::StationaryPolicy;

/// Nested `state → action → number`, the layout of policy and cost files.
pub type PairTable = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Rewrite every row leaving an absorbing state as a self-loop.
    pub close_absorbing: bool,
}

fn json_error(e: serde_json::Error) -> Error {
    Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string())
}

/// Checks names and signs that the document refers to, with the field path
/// of the first offending entry.
fn check_references(doc: &ModelDocument) -> Result<()> {
    let states: HashSet<&str> = doc.states.iter().map(String::as_str).collect();
    let known = |s: &str, path: String| {
        if states.contains(s) {
            Ok(())
        } else {
            Err(Error::parse(path, format!("undeclared state {s:?}")))
        }
    };
    for key in doc.actions.keys() {
        known(key, format!("actions.{key}"))?;
    }
    for (i, r) in doc.kernel.iter().enumerate() {
        known(&r.from, format!("kernel[{i}].from"))?;
        known(&r.to, format!("kernel[{i}].to"))?;
        if !doc.actions.get(&r.from).is_some_and(|acts| acts.contains(&r.action)) {
            return Err(Error::parse(
                format!("kernel[{i}].action"),
                format!("action {:?} is not declared for state {:?}", r.action, r.from),
            ));
        }
        if !r.p.is_finite() || r.p < 0.0 {
            return Err(Error::parse(
                format!("kernel[{i}].p"),
                format!("negative probability {}", r.p),
            ));
        }
    }
    for (s, &p) in &doc.initial {
        known(s, format!("initial.{s}"))?;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::parse(
                format!("initial.{s}"),
                format!("negative probability {p}"),
            ));
        }
    }
    for (i, s) in doc.absorbing.iter().enumerate() {
        known(s, format!("absorbing[{i}]"))?;
    }
    Ok(())
}

pub fn parse_model_document(text: &str) -> Result<ModelDocument> {
    let doc: ModelDocument = serde_json::from_str(text).map_err(json_error)?;
    check_references(&doc)?;
    Ok(doc)
}

/// Parses and validates a model file.
pub fn parse_model(text: &str) -> Result<Model> {
    parse_model_with(text, LoadOptions::default())
}

pub fn parse_model_with(text: &str, opts: LoadOptions) -> Result<Model> {
    let mut doc = parse_model_document(text)?;
    if opts.close_absorbing {
        doc.close_absorbing();
    }
    validate_model(&doc)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

pub fn load_model(path: &Path, opts: LoadOptions) -> Result<Model> {
    parse_model_with(&read_to_string(path)?, opts).map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

pub fn model_to_json(model: &Model) -> String {
    serde_json::to_string_pretty(&model.to_document()).expect("model documents serialize")
}

pub fn parse_policy(model: &Model, text: &str) -> Result<StationaryPolicy> {
    let table: PairTable = serde_json::from_str(text).map_err(json_error)?;
    StationaryPolicy::from_named(model, &table)
}

pub fn policy_to_json(model: &Model, policy: &StationaryPolicy) -> String {
    serde_json::to_string_pretty(&policy.to_named(model)).expect("policies serialize")
}

/// One entry of a measure file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureRecord {
    pub state: String,
    pub action: String,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMassRecord {
    pub state: String,
    pub mass: f64,
}

/// Reads a measure file. Pairs outside K are kept (so residuals can report
/// them) but both names must be known to the model.
pub fn parse_measure(model: &Model, text: &str) -> Result<StateActionMeasure> {
    let records: Vec<MeasureRecord> = serde_json::from_str(text).map_err(json_error)?;
    let mut mu = StateActionMeasure::new();
    for (i, r) in records.iter().enumerate() {
        let x = model
            .state_id(&r.state)
            .ok_or_else(|| Error::parse(format!("[{i}].state"), format!("undeclared state {:?}", r.state)))?;
        let a = model
            .action_id(&r.action)
            .ok_or_else(|| Error::parse(format!("[{i}].action"), format!("unknown action {:?}", r.action)))?;
        if !r.mass.is_finite() || r.mass < 0.0 {
            return Err(Error::parse(format!("[{i}].mass"), format!("negative mass {}", r.mass)));
        }
        mu.add(x, a, r.mass)?;
    }
    Ok(mu)
}

pub fn measure_records(model: &Model, mu: &StateActionMeasure) -> Vec<MeasureRecord> {
    mu.iter()
        .map(|(x, a, mass)| MeasureRecord {
            state: model.state_name(x).to_string(),
            action: model.action_name(a).to_string(),
            mass,
        })
        .collect()
}

pub fn measure_to_json(model: &Model, mu: &StateActionMeasure) -> String {
    serde_json::to_string_pretty(&measure_records(model, mu)).expect("measures serialize")
}

pub fn state_mass_records(model: &Model, m: &StateMeasure) -> Vec<StateMassRecord> {
    model
        .states()
        .map(|x| StateMassRecord {
            state: model.state_name(x).to_string(),
            mass: m.get(x),
        })
        .collect()
}

/// Reads a state-mass file (the output layout of `refmeasure`); states not
/// listed carry zero mass.
pub fn parse_state_measure(model: &Model, text: &str) -> Result<StateMeasure> {
    let records: Vec<StateMassRecord> = serde_json::from_str(text).map_err(json_error)?;
    let mut values = vec![0.0; model.n_states()];
    for (i, r) in records.iter().enumerate() {
        let x = model
            .state_id(&r.state)
            .ok_or_else(|| Error::parse(format!("[{i}].state"), format!("undeclared state {:?}", r.state)))?;
        if !r.mass.is_finite() || r.mass < 0.0 {
            return Err(Error::parse(format!("[{i}].mass"), format!("negative mass {}", r.mass)));
        }
        values[x.0] += r.mass;
    }
    Ok(StateMeasure::from_values(values))
}

/// A list of state sets: `[["a", "b"], ["b"], []]`.
pub fn parse_state_sets(model: &Model, text: &str) -> Result<Vec<StateSet>> {
    let raw: Vec<Vec<String>> = serde_json::from_str(text).map_err(json_error)?;
    raw.iter()
        .enumerate()
        .map(|(i, set)| {
            StateSet::from_names(model, set.iter().map(String::as_str)).map_err(|e| match e {
                Error::Parse { message, .. } => Error::parse(format!("[{i}]"), message),
                other => other,
            })
        })
        .collect()
}

pub fn pair_values(model: &Model, table: &PairTable, what: &str) -> Result<PairValues> {
    let mut out = PairValues::new();
    for (state, row) in table {
        let x = model
            .state_id(state)
            .ok_or_else(|| Error::parse(format!("{what}.{state}"), format!("undeclared state {state:?}")))?;
        for (action, &v) in row {
            let a = model
                .action_id(action)
                .filter(|&a| model.is_feasible(x, a))
                .ok_or_else(|| {
                    Error::parse(
                        format!("{what}.{state}.{action}"),
                        format!("action {action:?} is not available at {state:?}"),
                    )
                })?;
            if !v.is_finite() {
                return Err(Error::parse(format!("{what}.{state}.{action}"), "non-finite value"));
            }
            out.insert((x, a), v);
        }
    }
    Ok(out)
}

/// Cost file: `state → action → cost`; unlisted pairs cost zero.
pub fn parse_cost(model: &Model, text: &str) -> Result<PairValues> {
    let table: PairTable = serde_json::from_str(text).map_err(json_error)?;
    pair_values(model, &table, "cost")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl From<Sense> for Relation {
    fn from(s: Sense) -> Self {
        match s {
            Sense::Le => Relation::Le,
            Sense::Ge => Relation::Ge,
            Sense::Eq => Relation::Eq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRecord {
    pub coeffs: PairTable,
    pub sense: Sense,
    pub bound: f64,
}

/// Constraint file: a list of `{coeffs, sense, bound}` rows.
pub fn parse_constraints(model: &Model, text: &str) -> Result<Vec<PlanConstraint>> {
    let records: Vec<ConstraintRecord> = serde_json::from_str(text).map_err(json_error)?;
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(PlanConstraint {
                coeffs: pair_values(model, &r.coeffs, &format!("[{i}].coeffs"))?,
                relation: r.sense.into(),
                bound: r.bound,
            })
        })
        .collect()
}
