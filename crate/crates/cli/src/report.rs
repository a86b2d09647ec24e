//! Report documents. Every command produces one JSON document and one CSV
//! table carrying the same numbers.

use std::collections::BTreeMap;
use std::io::Write;

use absorb_mdp::io::{measure_records, state_mass_records, MeasureRecord, StateMassRecord};
use absorb_mdp::{Model, StateActionMeasure, StateMeasure};
use serde::Serialize;
use serde_json::Value;

/// Debug formatting of f64 is the shortest text that parses back to the
/// same double.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub struct Report {
    pub json: Value,
    pub table: Table,
}

impl Report {
    pub fn new(doc: &impl Serialize, table: Table) -> Self {
        Report {
            json: serde_json::to_value(doc).expect("reports serialize"),
            table,
        }
    }

    pub fn write_json(&self, out: &mut dyn Write) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut *out, &self.json)?;
        writeln!(out)
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.table.header)?;
        for row in &self.table.rows {
            w.write_record(row)?;
        }
        w.flush()
    }
}

pub fn measure_table(model: &Model, mu: &StateActionMeasure) -> (Vec<MeasureRecord>, Table) {
    let records = measure_records(model, mu);
    let mut t = Table::new(&["state", "action", "mass"]);
    for r in &records {
        t.push(vec![r.state.clone(), r.action.clone(), num(r.mass)]);
    }
    (records, t)
}

pub fn state_table(model: &Model, m: &StateMeasure) -> (Vec<StateMassRecord>, Table) {
    let records = state_mass_records(model, m);
    let mut t = Table::new(&["state", "mass"]);
    for r in &records {
        t.push(vec![r.state.clone(), num(r.mass)]);
    }
    (records, t)
}

#[derive(Debug, Serialize)]
pub struct ValidateDoc {
    pub valid: bool,
    pub n_states: usize,
    pub n_actions: usize,
    pub n_pairs: usize,
    pub absorbing: Vec<String>,
    pub initial_support: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct HittingTimeDoc {
    pub expected_hitting_time: f64,
}

#[derive(Debug, Serialize)]
pub struct SurvivalPoint {
    pub t: usize,
    pub survival: f64,
}

#[derive(Debug, Serialize)]
pub struct TailPoint {
    pub n: usize,
    pub tail: f64,
}

#[derive(Debug, Serialize)]
pub struct ProfilePoint {
    pub n: usize,
    pub profile: f64,
}

#[derive(Debug, Serialize)]
pub struct EscapingDoc {
    pub sup: Vec<f64>,
    pub per_policy: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct ResidualDoc {
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct ResidualsDoc {
    pub input: f64,
    pub invariance: f64,
    pub occupation: f64,
    pub reconstruction: f64,
    pub iterations: usize,
    pub period: usize,
}

#[derive(Debug, Serialize)]
pub struct DecomposeDoc {
    pub occupation_part: Vec<MeasureRecord>,
    pub invariant_part: Vec<MeasureRecord>,
    pub invariant_mass: f64,
    pub policy: BTreeMap<String, BTreeMap<String, f64>>,
    pub residuals: ResidualsDoc,
}

#[derive(Debug, Serialize)]
pub struct PhantomDoc {
    pub feasible: bool,
    pub theta: Option<Vec<MeasureRecord>>,
}

#[derive(Debug, Serialize)]
pub struct ClassifyDoc {
    pub verdict: String,
    pub residual: f64,
    pub evidence: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct SingularDoc {
    pub singular: bool,
    pub overlap: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct PlanDoc {
    pub value: f64,
    pub occupation: Vec<MeasureRecord>,
    pub policy: BTreeMap<String, BTreeMap<String, f64>>,
}

#[derive(Debug, Serialize)]
pub struct EstimateDoc {
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Serialize)]
pub struct CellDoc {
    pub state: String,
    pub action: String,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Serialize)]
pub struct SimulateDoc {
    pub n_samples: usize,
    pub cells: Vec<CellDoc>,
    pub hitting_time: EstimateDoc,
    pub censored: usize,
    pub censored_fraction: f64,
}
