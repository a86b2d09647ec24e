//! The absorbing control model: states, per-state action sets, a sparse
//! transition kernel, an initial distribution and an absorbing set.
//!
//! Models are built from a [`ModelDocument`] (the JSON file layout) through
//! [`validate_model`], which certifies every structural invariant. Once
//! built, a [`Model`] is immutable.

use std::collections::{BTreeMap, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, InvalidModelKind, Result};
use crate::measure::{StateMeasure, StateSet};

/// Tolerance on row masses and on the initial distribution.
pub const ROW_TOL: f64 = 1e-9;

/// Dense index of a declared state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateId(pub usize);

/// Dense index into the model's action alphabet (union of all A(x)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActionId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl ActionId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

/// One transition record `{from, action, to, p}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRecord {
    pub from: String,
    pub action: String,
    pub to: String,
    pub p: f64,
}

/// Unvalidated model in its on-disk layout.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub states: Vec<String>,
    pub actions: BTreeMap<String, Vec<String>>,
    pub kernel: Vec<KernelRecord>,
    pub initial: BTreeMap<String, f64>,
    pub absorbing: Vec<String>,
}

impl ModelDocument {
    /// Replaces every row leaving an absorbing state with a self-loop.
    pub fn close_absorbing(&mut self) {
        let absorbing: std::collections::HashSet<&str> = self.absorbing.iter().map(String::as_str).collect();
        self.kernel.retain(|r| !absorbing.contains(r.from.as_str()));
        for x in &self.absorbing {
            if let Some(acts) = self.actions.get(x) {
                for a in acts {
                    self.kernel.push(KernelRecord {
                        from: x.clone(),
                        action: a.clone(),
                        to: x.clone(),
                        p: 1.0,
                    });
                }
            }
        }
    }
}

/// A validated absorbing control model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    state_names: Vec<String>,
    state_index: HashMap<String, StateId>,
    action_names: Vec<String>,
    action_index: HashMap<String, ActionId>,
    actions_of: Vec<Vec<ActionId>>,
    // rows[x][k]: distribution of the next state under the k-th action of x,
    // sorted by target, duplicates merged.
    rows: Vec<Vec<Vec<(StateId, f64)>>>,
    initial: Vec<f64>,
    absorbing: Vec<bool>,
}

/// Certifies every model invariant and builds the dense representation.
pub fn validate_model(doc: &ModelDocument) -> Result<Model> {
    use InvalidModelKind::*;

    let mut state_index = HashMap::with_capacity(doc.states.len());
    for (i, s) in doc.states.iter().enumerate() {
        if state_index.insert(s.clone(), StateId(i)).is_some() {
            return Err(Error::invalid(UnknownState, format!("state {s:?} declared twice")));
        }
    }
    if doc.states.is_empty() {
        return Err(Error::invalid(UnknownState, "no states declared"));
    }
    let lookup = |s: &str, what: &str| -> Result<StateId> {
        state_index
            .get(s)
            .copied()
            .ok_or_else(|| Error::invalid(UnknownState, format!("{what} references undeclared state {s:?}")))
    };

    for key in doc.actions.keys() {
        lookup(key, "action table")?;
    }

    let mut action_names = Vec::new();
    let mut action_index: HashMap<String, ActionId> = HashMap::new();
    let mut actions_of = Vec::with_capacity(doc.states.len());
    for s in &doc.states {
        let list = doc
            .actions
            .get(s)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::invalid(EmptyActionSet, format!("state {s:?} has no actions")))?;
        let mut ids = Vec::with_capacity(list.len());
        for a in list {
            let id = *action_index.entry(a.clone()).or_insert_with(|| {
                action_names.push(a.clone());
                ActionId(action_names.len() - 1)
            });
            if ids.contains(&id) {
                return Err(Error::invalid(
                    UnknownAction,
                    format!("action {a:?} listed twice for state {s:?}"),
                ));
            }
            ids.push(id);
        }
        actions_of.push(ids);
    }

    let mut acc: Vec<Vec<BTreeMap<StateId, f64>>> = actions_of
        .iter()
        .map(|acts| vec![BTreeMap::new(); acts.len()])
        .collect();
    for (i, r) in doc.kernel.iter().enumerate() {
        let from = lookup(&r.from, &format!("kernel[{i}].from"))?;
        let to = lookup(&r.to, &format!("kernel[{i}].to"))?;
        let k = action_index
            .get(&r.action)
            .and_then(|a| actions_of[from.0].iter().position(|b| b == a))
            .ok_or_else(|| {
                Error::invalid(
                    UnknownAction,
                    format!("kernel[{i}]: action {:?} is not available at {:?}", r.action, r.from),
                )
            })?;
        if !r.p.is_finite() || r.p < 0.0 {
            return Err(Error::invalid(
                RowMassViolation,
                format!("kernel[{i}]: probability {} is not a nonnegative number", r.p),
            ));
        }
        *acc[from.0][k].entry(to).or_insert(0.0) += r.p;
    }

    let mut absorbing = vec![false; doc.states.len()];
    for s in &doc.absorbing {
        absorbing[lookup(s, "absorbing set")?.0] = true;
    }

    let mut rows = Vec::with_capacity(doc.states.len());
    for (x, per_action) in acc.into_iter().enumerate() {
        let mut xr = Vec::with_capacity(per_action.len());
        for (k, row) in per_action.into_iter().enumerate() {
            let row: Vec<(StateId, f64)> = row.into_iter().filter(|&(_, p)| p > 0.0).collect();
            let mass: f64 = row.iter().map(|&(_, p)| p).sum();
            let label = || format!("({:?}, {:?})", doc.states[x], action_names[actions_of[x][k].0]);
            if (mass - 1.0).abs() > ROW_TOL {
                return Err(Error::invalid(
                    RowMassViolation,
                    format!("row {} has mass {mass}", label()),
                ));
            }
            if absorbing[x] {
                let inside: f64 = row.iter().filter(|(y, _)| absorbing[y.0]).map(|&(_, p)| p).sum();
                if (inside - 1.0).abs() > ROW_TOL {
                    return Err(Error::invalid(
                        AbsorbingSetNotClosed,
                        format!("row {} sends mass {inside} into the absorbing set", label()),
                    ));
                }
            }
            xr.push(row);
        }
        rows.push(xr);
    }

    let mut initial = vec![0.0; doc.states.len()];
    for (s, &p) in &doc.initial {
        let x = lookup(s, "initial distribution")?;
        if !p.is_finite() || p < 0.0 {
            return Err(Error::invalid(
                BadInitialDistribution,
                format!("initial mass {p} at {s:?} is not a nonnegative number"),
            ));
        }
        initial[x.0] += p;
    }
    let total: f64 = initial.iter().sum();
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(
            BadInitialDistribution,
            format!("initial distribution has mass {total}"),
        ));
    }

    Ok(Model {
        state_names: doc.states.clone(),
        state_index,
        action_names,
        action_index,
        actions_of,
        rows,
        initial,
        absorbing,
    })
}

impl Model {
    pub fn n_states(&self) -> usize {
        self.state_names.len()
    }

    pub fn n_actions(&self) -> usize {
        self.action_names.len()
    }

    /// Number of feasible state-action pairs |K|.
    pub fn n_pairs(&self) -> usize {
        self.actions_of.iter().map(Vec::len).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> + '_ {
        (0..self.n_states()).map(StateId)
    }

    pub fn state_name(&self, x: StateId) -> &str {
        &self.state_names[x.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.state_index.get(name).copied()
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.action_names[a.0]
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.action_index.get(name).copied()
    }

    /// Available actions at `x`, in declaration order.
    pub fn actions_of(&self, x: StateId) -> &[ActionId] {
        &self.actions_of[x.0]
    }

    /// Position of `a` within A(x), if available there.
    pub fn local_action(&self, x: StateId, a: ActionId) -> Option<usize> {
        self.actions_of[x.0].iter().position(|&b| b == a)
    }

    pub fn is_feasible(&self, x: StateId, a: ActionId) -> bool {
        self.local_action(x, a).is_some()
    }

    /// Next-state distribution under the `k`-th available action of `x`.
    pub fn transitions(&self, x: StateId, k: usize) -> &[(StateId, f64)] {
        &self.rows[x.0][k]
    }

    /// All feasible pairs in state order, then action order: `(x, k, a)`
    /// with `a = actions_of(x)[k]`.
    pub fn pairs(&self) -> impl Iterator<Item = (StateId, usize, ActionId)> + '_ {
        self.actions_of
            .iter()
            .enumerate()
            .flat_map(|(x, acts)| acts.iter().enumerate().map(move |(k, &a)| (StateId(x), k, a)))
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn initial_support(&self) -> StateSet {
        StateSet::from_ids(self.states().filter(|x| self.initial[x.0] > 0.0))
    }

    pub fn is_absorbing(&self, x: StateId) -> bool {
        self.absorbing[x.0]
    }

    pub fn absorbing_mask(&self) -> &[bool] {
        &self.absorbing
    }

    pub fn absorbing_set(&self) -> StateSet {
        StateSet::from_ids(self.states().filter(|&x| self.absorbing[x.0]))
    }

    /// Same model with a different initial distribution.
    pub fn with_initial(&self, initial: &StateMeasure) -> Result<Model> {
        if initial.len() != self.n_states() {
            return Err(Error::invalid(
                InvalidModelKind::BadInitialDistribution,
                "initial distribution has the wrong dimension",
            ));
        }
        let total = initial.total();
        if (total - 1.0).abs() > ROW_TOL || initial.values().iter().any(|&p| p < 0.0) {
            return Err(Error::invalid(
                InvalidModelKind::BadInitialDistribution,
                format!("initial distribution has mass {total}"),
            ));
        }
        let mut m = self.clone();
        m.initial = initial.values().to_vec();
        Ok(m)
    }

    /// Serializes back to the file layout; state order and action order are
    /// preserved, kernel records are emitted row by row.
    pub fn to_document(&self) -> ModelDocument {
        let mut doc = ModelDocument {
            states: self.state_names.clone(),
            ..Default::default()
        };
        for x in self.states() {
            let name = self.state_name(x).to_string();
            let acts: Vec<String> = self
                .actions_of(x)
                .iter()
                .map(|&a| self.action_name(a).to_string())
                .collect();
            for (k, a) in acts.iter().enumerate() {
                for &(y, p) in self.transitions(x, k) {
                    doc.kernel.push(KernelRecord {
                        from: name.clone(),
                        action: a.clone(),
                        to: self.state_name(y).to_string(),
                        p,
                    });
                }
            }
            doc.actions.insert(name.clone(), acts);
            if self.initial[x.0] > 0.0 {
                doc.initial.insert(name.clone(), self.initial[x.0]);
            }
            if self.absorbing[x.0] {
                doc.absorbing.push(name);
            }
        }
        doc
    }
}

/// Least superset of `source` closed under positive-probability transitions
/// of any available action.
pub fn reachable_states(model: &Model, source: &StateSet) -> StateSet {
    let mut seen = vec![false; model.n_states()];
    let mut queue: VecDeque<StateId> = VecDeque::new();
    for x in source.iter() {
        if !seen[x.0] {
            seen[x.0] = true;
            queue.push_back(x);
        }
    }
    while let Some(x) = queue.pop_front() {
        for k in 0..model.actions_of(x).len() {
            for &(y, _) in model.transitions(x, k) {
                if !seen[y.0] {
                    seen[y.0] = true;
                    queue.push_back(y);
                }
            }
        }
    }
    StateSet::from_ids(model.states().filter(|x| seen[x.0]))
}
