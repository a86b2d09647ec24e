//! Test-only generators and brute-force oracles. Nothing here calls the
//! solvers it is used to check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use absorb_mdp::model::{KernelRecord, ModelDocument};
use absorb_mdp::{validate_model, Model, StateId, StationaryPolicy};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random model together with its construction roles.
pub struct RandomModel {
    pub model: Model,
    pub doc: ModelDocument,
    /// States that may be reached from the initial support.
    pub main: Vec<String>,
    /// States unreachable from the initial support (may hold closed classes).
    pub island: Vec<String>,
    pub absorbing: Vec<String>,
}

fn random_row(rng: &mut ChaCha8Rng, targets: &[String], forced: Option<&String>) -> Vec<(String, f64)> {
    let k = rng.random_range(1..=targets.len().min(3));
    let mut picks: Vec<&String> = targets.choose_multiple(rng, k).collect();
    if let Some(f) = forced {
        if !picks.contains(&f) {
            picks.push(f);
        }
    }
    let weights: Vec<f64> = picks.iter().map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    picks
        .into_iter()
        .zip(weights)
        .map(|(s, w)| (s.clone(), w / total))
        .collect()
}

/// At most 8 states and 3 actions per state. Every state in `main` can reach
/// the absorbing set under every action choice (each row either leaks into Δ
/// directly or moves strictly down the `main` order), so the model is
/// absorbing from η for every policy. The island part is unconstrained.
pub fn random_model(seed: u64) -> RandomModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=8usize);
    let n_abs = rng.random_range(1..=2usize).min(n - 1);
    let n_island = rng.random_range(0..=(n - n_abs - 1).min(4));
    let n_main = n - n_abs - n_island;

    let main: Vec<String> = (0..n_main).map(|i| format!("m{i}")).collect();
    let island: Vec<String> = (0..n_island).map(|i| format!("i{i}")).collect();
    let absorbing: Vec<String> = (0..n_abs).map(|i| format!("d{i}")).collect();
    let mut states: Vec<String> = main.iter().chain(&island).chain(&absorbing).cloned().collect();
    states.shuffle(&mut rng);

    let mut doc = ModelDocument {
        states,
        absorbing: absorbing.clone(),
        ..Default::default()
    };
    let all: Vec<String> = main.iter().chain(&island).chain(&absorbing).cloned().collect();
    let push_rows = |doc: &mut ModelDocument,
                     rng: &mut ChaCha8Rng,
                     s: &String,
                     build: &mut dyn FnMut(&mut ChaCha8Rng) -> Vec<(String, f64)>| {
        let m = rng.random_range(1..=3usize);
        let acts: Vec<String> = (0..m).map(|k| format!("a{k}")).collect();
        for a in &acts {
            for (to, p) in build(rng) {
                doc.kernel.push(KernelRecord {
                    from: s.clone(),
                    action: a.clone(),
                    to,
                    p,
                });
            }
        }
        doc.actions.insert(s.clone(), acts);
    };

    for (i, s) in main.iter().enumerate() {
        let lower: Vec<String> = main[..i].to_vec();
        let main_and_abs: Vec<String> = main.iter().chain(&absorbing).cloned().collect();
        push_rows(&mut doc, &mut rng, s, &mut |rng| {
            if i == 0 || rng.random_bool(0.5) {
                let d = absorbing[rng.random_range(0..absorbing.len())].clone();
                random_row(rng, &main_and_abs, Some(&d))
            } else {
                random_row(rng, &lower, None)
            }
        });
    }
    for s in &island {
        push_rows(&mut doc, &mut rng, s, &mut |rng| {
            if rng.random_bool(0.6) {
                random_row(rng, &island, None)
            } else {
                random_row(rng, &all, None)
            }
        });
    }
    for s in &absorbing {
        push_rows(&mut doc, &mut rng, s, &mut |rng| random_row(rng, &absorbing, None));
    }

    let k = rng.random_range(1..=main.len());
    let support: Vec<&String> = main.choose_multiple(&mut rng, k).collect();
    let w: Vec<f64> = support.iter().map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = w.iter().sum();
    doc.initial = support
        .into_iter()
        .zip(w)
        .map(|(s, w)| (s.clone(), w / total))
        .collect();

    let model = validate_model(&doc).expect("generated model is valid");
    RandomModel {
        model,
        doc,
        main,
        island,
        absorbing,
    }
}

/// A random fully supported-or-not stationary policy.
pub fn random_policy(model: &Model, rng: &mut ChaCha8Rng) -> StationaryPolicy {
    let probs = model
        .states()
        .map(|x| {
            let m = model.actions_of(x).len();
            let w: Vec<f64> = (0..m)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        0.0
                    } else {
                        rng.random_range(0.01..1.0)
                    }
                })
                .collect();
            let total: f64 = w.iter().sum();
            if total == 0.0 {
                let mut v = vec![0.0; m];
                v[0] = 1.0;
                v
            } else {
                w.into_iter().map(|v| v / total).collect()
            }
        })
        .collect();
    StationaryPolicy::from_probs(model, probs).unwrap()
}

/// Every deterministic stationary policy as a choice vector.
pub fn deterministic_choices(model: &Model) -> Vec<Vec<usize>> {
    let sizes: Vec<usize> = model.states().map(|x| model.actions_of(x).len()).collect();
    let mut out = vec![vec![]];
    for &m in &sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..m).map(move |k| {
                    let mut v = prefix.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// Brute-force phantom oracle: does some deterministic stationary policy
/// have a closed communicating class inside Δ^c?
pub fn has_closed_class_brute_force(model: &Model) -> bool {
    let n = model.n_states();
    deterministic_choices(model).into_iter().any(|choice| {
        let succ: Vec<Vec<usize>> = (0..n)
            .map(|x| {
                model
                    .transitions(StateId(x), choice[x])
                    .iter()
                    .map(|&(y, _)| y.0)
                    .collect()
            })
            .collect();
        let reach: Vec<Vec<bool>> = (0..n)
            .map(|x| {
                let mut seen = vec![false; n];
                let mut stack = vec![x];
                seen[x] = true;
                while let Some(u) = stack.pop() {
                    for &v in &succ[u] {
                        if !seen[v] {
                            seen[v] = true;
                            stack.push(v);
                        }
                    }
                }
                seen
            })
            .collect();
        (0..n).any(|x| {
            !model.is_absorbing(StateId(x))
                && (0..n).all(|y| !reach[x][y] || (!model.is_absorbing(StateId(y)) && reach[y][x]))
        })
    })
}

/// Exact visit probabilities and hitting-time law by enumerating every
/// trajectory of a finite-horizon absorbing chain (depth-first, product of
/// transition probabilities).
pub struct PathEnumeration {
    /// Expected visits per (state, local action index).
    pub visits: BTreeMap<(usize, usize), f64>,
    /// `survival[t] = P{T > t}` for `t < max_depth`.
    pub survival: Vec<f64>,
    pub expected_time: f64,
}

pub fn enumerate_paths(model: &Model, policy: &StationaryPolicy, max_depth: usize) -> PathEnumeration {
    let mut out = PathEnumeration {
        visits: BTreeMap::new(),
        survival: vec![0.0; max_depth],
        expected_time: 0.0,
    };
    fn walk(
        model: &Model,
        policy: &StationaryPolicy,
        x: StateId,
        prob: f64,
        depth: usize,
        max_depth: usize,
        out: &mut PathEnumeration,
    ) {
        if model.is_absorbing(x) {
            out.expected_time += prob * depth as f64;
            return;
        }
        assert!(depth < max_depth, "path longer than the enumeration depth");
        out.survival[depth] += prob;
        for (k, &w) in policy.probs(x).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            *out.visits.entry((x.0, k)).or_insert(0.0) += prob * w;
            for &(y, p) in model.transitions(x, k) {
                walk(model, policy, y, prob * w * p, depth + 1, max_depth, out);
            }
        }
    }
    for x in model.states() {
        let p = model.initial()[x.0];
        if p > 0.0 {
            walk(model, policy, x, p, 0, max_depth, &mut out);
        }
    }
    out
}

/// The same document with the island states removed (they are unreachable
/// from the initial support, so no kept row refers to them).
pub fn without_island(rm: &RandomModel) -> Model {
    let mut doc = rm.doc.clone();
    doc.states.retain(|s| !rm.island.contains(s));
    doc.actions.retain(|s, _| !rm.island.contains(s));
    doc.kernel.retain(|r| !rm.island.contains(&r.from));
    validate_model(&doc).unwrap()
}
