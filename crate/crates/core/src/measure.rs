//! Atomic measures on states and on state-action pairs, plus the
//! disintegration of a pair measure into its state marginal and a
//! stationary policy.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{ActionId, Model, StateId};
use crate::policy::StationaryPolicy;

/// Masses above `-NEG_TOL` are treated as zero when a measure is built from
/// computed values.
pub const NEG_TOL: f64 = 1e-12;

/// A subset of declared states.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StateSet(BTreeSet<StateId>);

impl StateSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_ids(ids: impl IntoIterator<Item = StateId>) -> Self {
        StateSet(ids.into_iter().collect())
    }

    pub fn from_names<'a>(model: &Model, names: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        names
            .into_iter()
            .map(|n| {
                model
                    .state_id(n)
                    .ok_or_else(|| Error::parse("state set", format!("undeclared state {n:?}")))
            })
            .collect::<Result<BTreeSet<_>>>()
            .map(StateSet)
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, x: StateId) -> bool {
        self.0.contains(&x)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        StateSet(self.0.union(&other.0).copied().collect())
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        StateSet(self.0.difference(&other.0).copied().collect())
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        StateSet(self.0.intersection(&other.0).copied().collect())
    }

    pub fn names(&self, model: &Model) -> Vec<String> {
        self.iter().map(|x| model.state_name(x).to_string()).collect()
    }
}

impl FromIterator<StateId> for StateSet {
    fn from_iter<T: IntoIterator<Item = StateId>>(iter: T) -> Self {
        StateSet(iter.into_iter().collect())
    }
}

/// A nonnegative measure on the states, stored densely.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMeasure(Vec<f64>);

impl StateMeasure {
    pub fn zeros(n: usize) -> Self {
        StateMeasure(vec![0.0; n])
    }

    /// Builds from computed values, clamping tiny negatives to zero.
    pub fn from_values(mut values: Vec<f64>) -> Self {
        for v in &mut values {
            if *v < 0.0 {
                if *v < -NEG_TOL {
                    log::debug!("clamping negative state mass {v:e}");
                }
                *v = 0.0;
            }
        }
        StateMeasure(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, x: StateId) -> f64 {
        self.0[x.0]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn mass_on(&self, set: &StateSet) -> f64 {
        set.iter().map(|x| self.0[x.0]).sum()
    }

    pub fn support(&self) -> StateSet {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, _)| StateId(i))
            .collect()
    }
}

/// A nonnegative measure on state-action pairs. Entries off the feasible
/// set K are representable so that they can be detected and reported.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateActionMeasure(BTreeMap<(StateId, ActionId), f64>);

impl StateActionMeasure {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `mass` at `(x, a)`. Negative input below `-NEG_TOL` is an error;
    /// smaller negatives are dropped.
    pub fn add(&mut self, x: StateId, a: ActionId, mass: f64) -> Result<()> {
        if !mass.is_finite() || mass < -NEG_TOL {
            return Err(Error::InvalidArgument(format!(
                "negative or non-finite mass {mass} at state {}",
                x.0
            )));
        }
        if mass > 0.0 {
            *self.0.entry((x, a)).or_insert(0.0) += mass;
        }
        Ok(())
    }

    /// Builds from computed mass values, clamping negatives to zero.
    pub(crate) fn from_computed(entries: impl IntoIterator<Item = ((StateId, ActionId), f64)>) -> Self {
        let mut m = BTreeMap::new();
        for (key, v) in entries {
            if v < -NEG_TOL {
                log::debug!("clamping negative pair mass {v:e}");
            }
            if v > 0.0 {
                *m.entry(key).or_insert(0.0) += v;
            }
        }
        StateActionMeasure(m)
    }

    pub fn get(&self, x: StateId, a: ActionId) -> f64 {
        self.0.get(&(x, a)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, ActionId, f64)> + '_ {
        self.0.iter().map(|(&(x, a), &v)| (x, a, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.values().sum()
    }

    /// State marginal μ^X.
    pub fn marginal(&self, model: &Model) -> StateMeasure {
        let mut m = vec![0.0; model.n_states()];
        for (x, _, v) in self.iter() {
            m[x.0] += v;
        }
        StateMeasure(m)
    }

    /// μ(K^c).
    pub fn off_support_mass(&self, model: &Model) -> f64 {
        self.iter()
            .filter(|&(x, a, _)| !model.is_feasible(x, a))
            .map(|(_, _, v)| v)
            .sum()
    }

    pub fn is_supported_on_pairs(&self, model: &Model) -> bool {
        self.iter().all(|(x, a, _)| model.is_feasible(x, a))
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self::from_computed(self.0.iter().map(|(&k, &v)| (k, c * v)))
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self::from_computed(self.0.iter().chain(other.0.iter()).map(|(&k, &v)| (k, v)))
    }

    /// Coordinatewise difference, clamped at zero.
    pub fn minus(&self, other: &Self) -> Self {
        let mut m = self.0.clone();
        for (&k, &v) in &other.0 {
            *m.entry(k).or_insert(0.0) -= v;
        }
        Self::from_computed(m)
    }

    /// Largest coordinatewise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut keys: BTreeSet<(StateId, ActionId)> = self.0.keys().copied().collect();
        keys.extend(other.0.keys().copied());
        keys.into_iter()
            .map(|(x, a)| (self.get(x, a) - other.get(x, a)).abs())
            .fold(0.0, f64::max)
    }

    /// The product measure ν ⊗ σ.
    pub fn product(model: &Model, nu: &StateMeasure, policy: &StationaryPolicy) -> Self {
        Self::from_computed(model.pairs().map(|(x, k, a)| ((x, a), nu.get(x) * policy.prob(x, k))))
    }
}

/// Splits μ into its state marginal and a stationary policy with
/// μ = μ^X ⊗ σ. Zero-mass states get the uniform distribution on A(x).
pub fn disintegrate(mu: &StateActionMeasure, model: &Model) -> Result<(StateMeasure, StationaryPolicy)> {
    if let Some((x, a, _)) = mu.iter().find(|&(x, a, _)| !model.is_feasible(x, a)) {
        return Err(Error::SupportViolation(format!(
            "mass at ({:?}, {:?})",
            model.state_name(x),
            model.action_name(a)
        )));
    }
    let marginal = mu.marginal(model);
    let probs = model
        .states()
        .map(|x| {
            let acts = model.actions_of(x);
            let m = marginal.get(x);
            if m > 0.0 {
                acts.iter().map(|&a| mu.get(x, a) / m).collect()
            } else {
                vec![1.0 / acts.len() as f64; acts.len()]
            }
        })
        .collect();
    let policy = StationaryPolicy::from_probs(model, probs)?;
    Ok((marginal, policy))
}
