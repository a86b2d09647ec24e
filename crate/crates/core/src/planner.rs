//! Expected total cost minimization with linear side constraints, solved
//! as an LP over the characteristic polytope.
//!
//! Variables are the pair masses μ(x,a) for the transient states reachable
//! from the initial support; every other pair is fixed at zero. On an
//! absorbing model that restriction removes all invariant directions, so
//! the optimum is an occupation measure and its disintegration is a
//! stationary policy realizing it.

use std::collections::BTreeMap;

use crate::absorption::{occupation_measure, OccupationOptions};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpProblem, LpStatus, Relation};
use crate::measure::{disintegrate, StateActionMeasure};
use crate::model::{reachable_states, ActionId, Model, StateId};
use crate::policy::StationaryPolicy;

/// A real function on pairs; pairs not listed are zero.
pub type PairValues = BTreeMap<(StateId, ActionId), f64>;

/// Largest disagreement tolerated between the LP optimum and the
/// occupation measure of its disintegrated policy.
pub const ROUND_TRIP_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanConstraint {
    pub coeffs: PairValues,
    pub relation: Relation,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    pub model: Model,
    pub cost: PairValues,
    pub constraints: Vec<PlanConstraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub value: f64,
    pub occupation: StateActionMeasure,
    pub policy: StationaryPolicy,
}

fn check_pairs(model: &Model, values: &PairValues, what: &str) -> Result<()> {
    for (&(x, a), v) in values {
        if !model.is_feasible(x, a) {
            return Err(Error::InvalidArgument(format!(
                "{what} defined on infeasible pair ({:?}, {:?})",
                model.state_name(x),
                model.action_name(a)
            )));
        }
        if !v.is_finite() {
            return Err(Error::InvalidArgument(format!("{what} has a non-finite coefficient")));
        }
    }
    Ok(())
}

pub fn solve_constrained(problem: &PlanningProblem) -> Result<Plan> {
    let model = &problem.model;
    check_pairs(model, &problem.cost, "cost")?;
    for (i, c) in problem.constraints.iter().enumerate() {
        check_pairs(model, &c.coeffs, &format!("constraint {i}"))?;
    }

    let region: Vec<StateId> = reachable_states(model, &model.initial_support())
        .iter()
        .filter(|&x| !model.is_absorbing(x))
        .collect();
    let mut row_of = vec![None; model.n_states()];
    for (r, x) in region.iter().enumerate() {
        row_of[x.0] = Some(r);
    }
    let vars: Vec<(StateId, usize, ActionId)> = model.pairs().filter(|(x, _, _)| row_of[x.0].is_some()).collect();
    let n = vars.len();

    let objective = vars
        .iter()
        .map(|&(x, _, a)| problem.cost.get(&(x, a)).copied().unwrap_or(0.0))
        .collect();
    let mut lp = LpProblem::new(objective);

    let mut rows = vec![vec![0.0; n]; region.len()];
    for (j, &(y, k, _)) in vars.iter().enumerate() {
        rows[row_of[y.0].expect("variable state is in region")][j] += 1.0;
        for &(x, p) in model.transitions(y, k) {
            if let Some(r) = row_of[x.0] {
                rows[r][j] -= p;
            }
        }
    }
    for (row, x) in rows.into_iter().zip(&region) {
        lp.add_eq(row, model.initial()[x.0]);
    }
    for c in &problem.constraints {
        let coeffs = vars
            .iter()
            .map(|&(x, _, a)| c.coeffs.get(&(x, a)).copied().unwrap_or(0.0))
            .collect();
        lp.add(coeffs, c.relation, c.bound);
    }

    let out = solve_lp(&lp)?;
    match out.status {
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Unbounded),
        LpStatus::Optimal => {}
    }

    let occupation =
        StateActionMeasure::from_computed(vars.iter().zip(&out.solution).map(|(&(x, _, a), &v)| ((x, a), v)));
    let (_, policy) = disintegrate(&occupation, model)?;
    let value = occupation
        .iter()
        .map(|(x, a, v)| v * problem.cost.get(&(x, a)).copied().unwrap_or(0.0))
        .sum();

    let realized = occupation_measure(model, &policy, OccupationOptions::default())?;
    let gap = realized.max_abs_diff(&occupation);
    if gap > ROUND_TRIP_TOL {
        return Err(Error::NonAbsorbing(format!(
            "LP optimum differs from the occupation measure of its policy by {gap:e}"
        )));
    }

    Ok(Plan {
        value,
        occupation,
        policy,
    })
}
