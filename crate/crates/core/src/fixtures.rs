//! Programmatic construction of the benchmark models.
//!
//! `phantom(n, beta_model)` is the chain `2 → 3 → … → n` feeding state `1`
//! (and from there the absorbing state `0`), together with a two-cycle
//! `{-1, -2}` unreachable from the initial distribution `½δ₁ + ½δ₂`. The
//! forward mass `beta_model` at the boundary state `n` is redirected into
//! `0`.
//!
//! `tree(levels)` is the column model: from `(i,0)` action `c` stops to
//! `xbar` or advances to `(i+1,0)` with probability ½ each, action `s`
//! walks the column `(i,0) → (i,1) → … → (i,2^i-1) → xbar`. The last level
//! only offers `s`.

use crate::error::{Error, Result};
use crate::model::{validate_model, KernelRecord, Model, ModelDocument};
use crate::policy::StationaryPolicy;

/// Largest tree depth accepted (the model has 2^(levels+1) states).
pub const MAX_TREE_LEVELS: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FixtureSpec {
    Phantom { n: usize, beta_model: f64 },
    Tree { levels: u32 },
    Geometric { p: f64 },
    Trivial,
}

pub fn generate_fixture(spec: FixtureSpec) -> Result<Model> {
    match spec {
        FixtureSpec::Phantom { n, beta_model } => phantom(n, beta_model),
        FixtureSpec::Tree { levels } => tree(levels),
        FixtureSpec::Geometric { p } => geometric(p),
        FixtureSpec::Trivial => trivial(),
    }
}

fn rec(from: &str, action: &str, to: &str, p: f64) -> KernelRecord {
    KernelRecord {
        from: from.into(),
        action: action.into(),
        to: to.into(),
        p,
    }
}

pub fn phantom_document(n: usize, beta_model: f64) -> Result<ModelDocument> {
    if n < 3 {
        return Err(Error::BadParameter(format!("phantom chain length {n} < 3")));
    }
    if !(beta_model > 0.0 && beta_model < 1.0) {
        return Err(Error::BadParameter(format!("beta_model {beta_model} not in (0,1)")));
    }
    let mut states: Vec<String> = (0..=n).map(|i| i.to_string()).collect();
    states.push("-1".into());
    states.push("-2".into());

    let mut kernel = vec![rec("0", "a", "0", 1.0), rec("1", "a", "0", 1.0)];
    for i in 2..=n {
        let from = i.to_string();
        kernel.push(rec(&from, "a", "1", 1.0 - beta_model));
        let next = if i == n { "0".to_string() } else { (i + 1).to_string() };
        kernel.push(rec(&from, "a", &next, beta_model));
    }
    for (x, y) in [("-1", "-2"), ("-2", "-1")] {
        kernel.push(rec(x, "a", x, 1.0 - beta_model));
        kernel.push(rec(x, "a", y, beta_model));
    }

    Ok(ModelDocument {
        actions: states.iter().map(|s| (s.clone(), vec!["a".to_string()])).collect(),
        states,
        kernel,
        initial: [("1".to_string(), 0.5), ("2".to_string(), 0.5)].into_iter().collect(),
        absorbing: vec!["0".into()],
    })
}

pub fn phantom(n: usize, beta_model: f64) -> Result<Model> {
    validate_model(&phantom_document(n, beta_model)?)
}

fn cell(i: u32, j: u64) -> String {
    format!("({i},{j})")
}

pub const TREE_SINK: &str = "xbar";

pub fn tree_document(levels: u32) -> Result<ModelDocument> {
    if !(1..=MAX_TREE_LEVELS).contains(&levels) {
        return Err(Error::BadParameter(format!(
            "tree levels {levels} outside 1..={MAX_TREE_LEVELS}"
        )));
    }
    let mut doc = ModelDocument::default();
    for i in 0..=levels {
        let width = 1u64 << i;
        for j in 0..width {
            let name = cell(i, j);
            let acts = if j == 0 && i < levels {
                vec!["c", "s"]
            } else {
                vec!["s"]
            };
            doc.actions
                .insert(name.clone(), acts.into_iter().map(String::from).collect());
            if j == 0 && i < levels {
                doc.kernel.push(rec(&name, "c", TREE_SINK, 0.5));
                doc.kernel.push(rec(&name, "c", &cell(i + 1, 0), 0.5));
            }
            let next = if j + 1 < width {
                cell(i, j + 1)
            } else {
                TREE_SINK.to_string()
            };
            doc.kernel.push(rec(&name, "s", &next, 1.0));
            doc.states.push(name);
        }
    }
    doc.states.push(TREE_SINK.into());
    doc.actions.insert(TREE_SINK.into(), vec!["s".into()]);
    doc.kernel.push(rec(TREE_SINK, "s", TREE_SINK, 1.0));
    doc.initial.insert(cell(0, 0), 1.0);
    doc.absorbing.push(TREE_SINK.into());
    Ok(doc)
}

pub fn tree(levels: u32) -> Result<Model> {
    validate_model(&tree_document(levels)?)
}

/// Parses a tree cell name `(i,j)`.
pub fn tree_cell(name: &str) -> Option<(u32, u64)> {
    let inner = name.strip_prefix('(')?.strip_suffix(')')?;
    let (i, j) = inner.split_once(',')?;
    Some((i.parse().ok()?, j.parse().ok()?))
}

/// The deterministic policy γ_t: action `c` at `(i,0)` for `i < t`, `s`
/// everywhere else.
pub fn tree_policy(model: &Model, t: u32) -> StationaryPolicy {
    let choice: Vec<usize> = model
        .states()
        .map(|x| {
            let wants_c = matches!(tree_cell(model.state_name(x)), Some((i, 0)) if i < t);
            let pick = if wants_c { "c" } else { "s" };
            model
                .actions_of(x)
                .iter()
                .position(|&a| model.action_name(a) == pick)
                .unwrap_or(0)
        })
        .collect();
    StationaryPolicy::deterministic(model, &choice).expect("choice vector matches the model")
}

/// One transient state `x` leaving to the absorbing `d` with probability `p`.
pub fn geometric(p: f64) -> Result<Model> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::BadParameter(format!("escape probability {p} not in (0,1]")));
    }
    let mut kernel = vec![rec("x", "a", "d", p), rec("d", "a", "d", 1.0)];
    if p < 1.0 {
        kernel.push(rec("x", "a", "x", 1.0 - p));
    }
    validate_model(&ModelDocument {
        states: vec!["x".into(), "d".into()],
        actions: [("x".into(), vec!["a".into()]), ("d".into(), vec!["a".into()])]
            .into_iter()
            .collect(),
        kernel,
        initial: [("x".to_string(), 1.0)].into_iter().collect(),
        absorbing: vec!["d".into()],
    })
}

/// `x0 → d` with probability one.
pub fn trivial() -> Result<Model> {
    validate_model(&ModelDocument {
        states: vec!["x0".into(), "d".into()],
        actions: [("x0".into(), vec!["a".into()]), ("d".into(), vec!["a".into()])]
            .into_iter()
            .collect(),
        kernel: vec![rec("x0", "a", "d", 1.0), rec("d", "a", "d", 1.0)],
        initial: [("x0".to_string(), 1.0)].into_iter().collect(),
        absorbing: vec!["d".into()],
    })
}
