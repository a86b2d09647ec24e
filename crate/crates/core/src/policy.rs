//! Stationary randomized policies and the state kernels they induce.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{Model, StateId, ROW_TOL};

/// Per-state distribution over the available actions, aligned with
/// [`Model::actions_of`].
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    probs: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    /// Validates per-state probability vectors against the model.
    pub fn from_probs(model: &Model, probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.len() != model.n_states() {
            return Err(Error::PolicyMismatch(format!(
                "policy covers {} states, model has {}",
                probs.len(),
                model.n_states()
            )));
        }
        for (x, row) in model.states().zip(&probs) {
            let name = model.state_name(x);
            if row.len() != model.actions_of(x).len() {
                return Err(Error::PolicyMismatch(format!(
                    "state {name:?}: {} probabilities for {} actions",
                    row.len(),
                    model.actions_of(x).len()
                )));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::PolicyMismatch(format!("state {name:?}: negative probability")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::PolicyMismatch(format!(
                    "state {name:?}: probabilities sum to {s}"
                )));
            }
        }
        Ok(StationaryPolicy { probs })
    }

    pub fn uniform(model: &Model) -> Self {
        let probs = model
            .states()
            .map(|x| {
                let m = model.actions_of(x).len();
                vec![1.0 / m as f64; m]
            })
            .collect();
        StationaryPolicy { probs }
    }

    /// Deterministic policy picking the `choice[x]`-th available action.
    pub fn deterministic(model: &Model, choice: &[usize]) -> Result<Self> {
        if choice.len() != model.n_states() {
            return Err(Error::PolicyMismatch("choice vector has the wrong length".into()));
        }
        let probs = model
            .states()
            .zip(choice)
            .map(|(x, &k)| {
                let m = model.actions_of(x).len();
                if k >= m {
                    return Err(Error::PolicyMismatch(format!(
                        "state {:?} has no action #{k}",
                        model.state_name(x)
                    )));
                }
                let mut row = vec![0.0; m];
                row[k] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Ok(StationaryPolicy { probs })
    }

    /// Builds from names. States absent from `table` default to uniform.
    pub fn from_named(model: &Model, table: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<Self> {
        let mut probs: Vec<Vec<f64>> = Self::uniform(model).probs;
        for (state, dist) in table {
            let x = model
                .state_id(state)
                .ok_or_else(|| Error::PolicyMismatch(format!("unknown state {state:?}")))?;
            let mut row = vec![0.0; model.actions_of(x).len()];
            for (action, &p) in dist {
                let k = model
                    .action_id(action)
                    .and_then(|a| model.local_action(x, a))
                    .ok_or_else(|| Error::PolicyMismatch(format!("action {action:?} is not available at {state:?}")))?;
                row[k] += p;
            }
            probs[x.0] = row;
        }
        Self::from_probs(model, probs)
    }

    pub fn to_named(&self, model: &Model) -> BTreeMap<String, BTreeMap<String, f64>> {
        model
            .states()
            .map(|x| {
                let dist = model
                    .actions_of(x)
                    .iter()
                    .zip(&self.probs[x.0])
                    .map(|(&a, &p)| (model.action_name(a).to_string(), p))
                    .collect();
                (model.state_name(x).to_string(), dist)
            })
            .collect()
    }

    pub fn prob(&self, x: StateId, k: usize) -> f64 {
        self.probs[x.0][k]
    }

    pub fn probs(&self, x: StateId) -> &[f64] {
        &self.probs[x.0]
    }

    pub(crate) fn check_against(&self, model: &Model) -> Result<()> {
        let ok = self.probs.len() == model.n_states()
            && model
                .states()
                .all(|x| self.probs[x.0].len() == model.actions_of(x).len());
        if ok {
            Ok(())
        } else {
            Err(Error::PolicyMismatch("policy was built for a different model".into()))
        }
    }
}

/// Sparse row-stochastic kernel on states.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    rows: Vec<Vec<(StateId, f64)>>,
}

impl Kernel {
    pub fn row(&self, x: StateId) -> &[(StateId, f64)] {
        &self.rows[x.0]
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    /// One application of the kernel to a row vector: `dist · K`.
    pub fn push_forward(&self, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows.len()];
        for (x, &m) in dist.iter().enumerate() {
            if m != 0.0 {
                for &(y, p) in &self.rows[x] {
                    out[y.0] += m * p;
                }
            }
        }
        out
    }

    /// `dist · K 𝕀_{Δ^c}`: one step with mass entering the absorbing set
    /// removed.
    pub fn push_forward_killed(&self, dist: &[f64], absorbing: &[bool]) -> Vec<f64> {
        let mut out = self.push_forward(dist);
        for (v, &dead) in out.iter_mut().zip(absorbing) {
            if dead {
                *v = 0.0;
            }
        }
        out
    }
}

/// The state kernel K_σ(y|x) = Σ_a σ(a|x) Q(y|x,a).
pub fn induced_kernel(model: &Model, policy: &StationaryPolicy) -> Result<Kernel> {
    policy.check_against(model)?;
    let rows = model
        .states()
        .map(|x| {
            let mut acc: BTreeMap<StateId, f64> = BTreeMap::new();
            for (k, &w) in policy.probs(x).iter().enumerate() {
                if w > 0.0 {
                    for &(y, p) in model.transitions(x, k) {
                        *acc.entry(y).or_insert(0.0) += w * p;
                    }
                }
            }
            acc.into_iter().collect()
        })
        .collect();
    Ok(Kernel { rows })
}
