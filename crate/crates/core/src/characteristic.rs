//! The characteristic equations `μ(K^c) = 0, μ^X = (η + μQ)𝕀_{Δ^c}`.
//!
//! Every occupation measure solves them, but so does any occupation measure
//! plus a measure invariant for `Q𝕀_{Δ^c}`. This module measures how far a
//! measure is from solving the system, splits solutions into their two
//! parts, looks for invariant directions with an LP, and decides membership
//! in the occupation set by support inclusion in λ^β.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LpError, LpProblem, LpStatus};
use crate::measure::{disintegrate, StateActionMeasure, StateMeasure, StateSet};
use crate::model::{ActionId, Model, StateId};
use crate::policy::{induced_kernel, Kernel, StationaryPolicy};

/// Default residual below which a measure counts as a solution.
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-8;

/// LP values below this are treated as structural zeros in a phantom
/// direction.
const DIRECTION_ZERO: f64 = 1e-13;

/// Longest cycle length recognized when the tail iteration oscillates.
const MAX_PERIOD: usize = 64;

/// `(μQ)(x) = Σ_{(y,b)∈K} μ(y,b) Q(x|y,b)`.
fn flow(model: &Model, mu: &StateActionMeasure) -> Vec<f64> {
    let mut out = vec![0.0; model.n_states()];
    for (y, b, m) in mu.iter() {
        if let Some(k) = model.local_action(y, b) {
            for &(x, p) in model.transitions(y, k) {
                out[x.0] += m * p;
            }
        }
    }
    out
}

/// `max_{x∉Δ} |μ^X(x) − η(x) − (μQ)(x)| + μ^X(Δ) + μ(K^c)`.
pub fn characteristic_residual(model: &Model, mu: &StateActionMeasure) -> f64 {
    residual_with_source(model, mu, model.initial())
}

/// Residual of the invariance equation `θ^X = θQ𝕀_{Δ^c}` (the
/// characteristic equation with η = 0).
pub fn invariance_residual(model: &Model, theta: &StateActionMeasure) -> f64 {
    residual_with_source(model, theta, &vec![0.0; model.n_states()])
}

fn residual_with_source(model: &Model, mu: &StateActionMeasure, source: &[f64]) -> f64 {
    let marginal = mu.marginal(model);
    let inflow = flow(model, mu);
    let mut worst = 0.0_f64;
    let mut on_delta = 0.0;
    for x in model.states() {
        if model.is_absorbing(x) {
            on_delta += marginal.get(x);
        } else {
            worst = worst.max((marginal.get(x) - source[x.0] - inflow[x.0]).abs());
        }
    }
    worst + on_delta + mu.off_support_mass(model)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions {
    /// Largest characteristic residual accepted as a solution.
    pub residual_tol: f64,
    /// ℓ1 step size at which the tail iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            residual_tol: DEFAULT_RESIDUAL_TOL,
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResiduals {
    /// Characteristic residual of the input.
    pub input: f64,
    /// Invariance residual of the invariant part.
    pub invariance: f64,
    /// Characteristic residual of the occupation part.
    pub occupation: f64,
    /// `max |occupation + invariant − input|`.
    pub reconstruction: f64,
    pub iterations: usize,
    /// 1 when the tail converged, otherwise the cycle length averaged over.
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionResult {
    pub occupation_part: StateActionMeasure,
    pub invariant_part: StateActionMeasure,
    pub policy: StationaryPolicy,
    pub residuals: DecompositionResiduals,
}

fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// States lying in a closed communicating class of `kernel` inside Δ^c.
/// The tail limit of a finite chain is carried by exactly these states.
fn recurrent_states(kernel: &Kernel, absorbing: &[bool]) -> Vec<bool> {
    let n = kernel.n_states();
    let reach: Vec<Vec<bool>> = (0..n)
        .map(|x| {
            let mut seen = vec![false; n];
            let mut stack = vec![StateId(x)];
            seen[x] = true;
            while let Some(u) = stack.pop() {
                for &(v, p) in kernel.row(u) {
                    if p > 0.0 && !seen[v.0] {
                        seen[v.0] = true;
                        stack.push(v);
                    }
                }
            }
            seen
        })
        .collect();
    (0..n)
        .map(|x| !absorbing[x] && (0..n).all(|y| !reach[x][y] || (!absorbing[y] && reach[y][x])))
        .collect()
}

/// Splits a solution μ = μ_{η,σ} + ν⊗σ, where σ disintegrates μ and
/// ν = lim_t μ^X (Q_σ𝕀_{Δ^c})^t.
pub fn decompose(model: &Model, mu: &StateActionMeasure, opts: DecomposeOptions) -> Result<DecompositionResult> {
    let input = characteristic_residual(model, mu);
    if input.is_nan() || input > opts.residual_tol {
        return Err(Error::NotASolution {
            residual: input,
            tol: opts.residual_tol,
        });
    }
    let (marginal, policy) = disintegrate(mu, model)?;
    let kernel = induced_kernel(model, &policy)?;
    let absorbing = model.absorbing_mask();

    let mut history: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::new();
    let mut current: Vec<f64> = marginal
        .values()
        .iter()
        .zip(absorbing)
        .map(|(&v, &d)| if d { 0.0 } else { v })
        .collect();
    let mut limit = None;
    let mut last_step = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let next = kernel.push_forward_killed(&current, absorbing);
        iterations += 1;
        last_step = l1_diff(&next, &current);
        if last_step < opts.tol {
            limit = Some((next, 1));
            break;
        }
        history.push_back(std::mem::replace(&mut current, next));
        if history.len() > MAX_PERIOD {
            history.pop_front();
        }
        // `current` is ν_t; history ends with ν_{t-1}. A lag-p return means
        // the transient has died out and the remainder cycles.
        if let Some(p) = (2..=history.len()).find(|&p| l1_diff(&current, &history[history.len() - p]) < opts.tol) {
            let start = history.len() + 1 - p;
            let mut avg = current.clone();
            for h in history.iter().skip(start) {
                for (a, v) in avg.iter_mut().zip(h) {
                    *a += v;
                }
            }
            avg.iter_mut().for_each(|a| *a /= p as f64);
            limit = Some((avg, p));
            break;
        }
    }
    let Some((nu, period)) = limit else {
        return Err(Error::NoConvergence { iterations, last_step });
    };
    log::debug!("tail iteration stopped after {iterations} steps (period {period})");

    // Whatever the stopped iteration left on transient states is rounding
    // residue of a geometrically vanishing tail; the occupation part is
    // zero on the recurrent states of a finite solution.
    let recurrent = recurrent_states(&kernel, absorbing);
    let nu = nu
        .into_iter()
        .zip(&recurrent)
        .map(|(v, &r)| if r { v } else { 0.0 })
        .collect();
    let invariant_part = StateActionMeasure::product(model, &StateMeasure::from_values(nu), &policy);
    let occupation_part = StateActionMeasure::from_computed(
        mu.iter()
            .filter(|(x, _, _)| !recurrent[x.0])
            .map(|(x, a, v)| ((x, a), v)),
    );
    let residuals = DecompositionResiduals {
        input,
        invariance: invariance_residual(model, &invariant_part),
        occupation: characteristic_residual(model, &occupation_part),
        reconstruction: occupation_part.plus(&invariant_part).max_abs_diff(mu),
        iterations,
        period,
    };
    Ok(DecompositionResult {
        occupation_part,
        invariant_part,
        policy,
        residuals,
    })
}

/// Looks for a normalized invariant measure for `Q𝕀_{Δ^c}` by LP
/// feasibility: θ ≥ 0 on the feasible pairs outside Δ, Σθ = 1 and
/// `Σ_a θ(x,a) = Σ_{(y,b)} θ(y,b) Q(x|y,b)` for every x ∉ Δ. Returns `None`
/// when the system is infeasible, i.e. when no phantom measures exist.
///
/// When several disjoint recurrent classes exist the LP returns whichever
/// vertex it reaches first.
pub fn find_phantom_direction(model: &Model) -> Result<Option<StateActionMeasure>> {
    let vars: Vec<(StateId, usize, ActionId)> = model.pairs().filter(|&(x, _, _)| !model.is_absorbing(x)).collect();
    if vars.is_empty() {
        return Ok(None);
    }
    let transient: Vec<StateId> = model.states().filter(|&x| !model.is_absorbing(x)).collect();
    let mut row_of = vec![usize::MAX; model.n_states()];
    for (r, x) in transient.iter().enumerate() {
        row_of[x.0] = r;
    }

    let n = vars.len();
    let mut rows = vec![vec![0.0; n]; transient.len()];
    for (j, &(y, k, _)) in vars.iter().enumerate() {
        rows[row_of[y.0]][j] += 1.0;
        for &(x, p) in model.transitions(y, k) {
            if !model.is_absorbing(x) {
                rows[row_of[x.0]][j] -= p;
            }
        }
    }
    let mut lp = LpProblem::new(vec![0.0; n]);
    for row in rows {
        lp.add_eq(row, 0.0);
    }
    lp.add_eq(vec![1.0; n], 1.0);

    let out = solve_lp(&lp)?;
    match out.status {
        LpStatus::Infeasible => Ok(None),
        LpStatus::Unbounded => Err(LpError::NumericalFailure("zero objective reported unbounded".into()).into()),
        LpStatus::Optimal => {
            let kept: f64 = out.solution.iter().filter(|&&v| v > DIRECTION_ZERO).sum();
            let theta = StateActionMeasure::from_computed(
                vars.iter()
                    .zip(&out.solution)
                    .filter(|(_, &v)| v > DIRECTION_ZERO)
                    .map(|(&(x, _, a), &v)| ((x, a), v / kept)),
            );
            let res = invariance_residual(model, &theta);
            if res > 1e-9 {
                return Err(
                    LpError::NumericalFailure(format!("phantom direction has invariance residual {res:e}")).into(),
                );
            }
            Ok(Some(theta))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Occupation,
    Phantom,
    NotSolution,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Occupation => "occupation",
            Verdict::Phantom => "phantom",
            Verdict::NotSolution => "not-solution",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub verdict: Verdict,
    pub residual: f64,
    /// Support states of μ^X outside supp λ^β (nonempty only for phantoms).
    pub evidence: StateSet,
}

/// Classifies μ with the default residual tolerance.
pub fn classify(model: &Model, mu: &StateActionMeasure, lambda_beta: &StateMeasure) -> Classification {
    classify_with_tolerance(model, mu, lambda_beta, DEFAULT_RESIDUAL_TOL)
}

/// NotSolution above the residual gate; otherwise Occupation exactly when
/// supp μ^X ⊆ supp λ^β.
pub fn classify_with_tolerance(
    model: &Model,
    mu: &StateActionMeasure,
    lambda_beta: &StateMeasure,
    tol: f64,
) -> Classification {
    let residual = characteristic_residual(model, mu);
    if residual.is_nan() || residual > tol {
        return Classification {
            verdict: Verdict::NotSolution,
            residual,
            evidence: StateSet::empty(),
        };
    }
    let outside = mu.marginal(model).support().difference(&lambda_beta.support());
    Classification {
        verdict: if outside.is_empty() {
            Verdict::Occupation
        } else {
            Verdict::Phantom
        },
        residual,
        evidence: outside,
    }
}

/// Atomic mutual singularity: the state marginals have disjoint supports.
pub fn singularity_check(model: &Model, occ: &StateActionMeasure, theta: &StateActionMeasure) -> bool {
    singular_overlap(model, occ, theta).is_empty()
}

/// States charged by both marginals.
pub fn singular_overlap(model: &Model, occ: &StateActionMeasure, theta: &StateActionMeasure) -> StateSet {
    occ.marginal(model)
        .support()
        .intersection(&theta.marginal(model).support())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorption::{occupation_measure, reference_measure, OccupationOptions, ReferenceMeasureConfig};
    use crate::fixtures;

    fn phantom_nu(model: &Model, k: f64) -> StateActionMeasure {
        let occ = occupation_measure(model, &StationaryPolicy::uniform(model), OccupationOptions::default()).unwrap();
        let a = model.action_id("a").unwrap();
        let mut cycle = StateActionMeasure::new();
        for s in ["-1", "-2"] {
            cycle.add(model.state_id(s).unwrap(), a, k).unwrap();
        }
        occ.plus(&cycle)
    }

    #[test]
    fn occupation_measures_solve_the_equations() {
        let m = fixtures::phantom(12, 0.5).unwrap();
        assert!(characteristic_residual(&m, &phantom_nu(&m, 0.0)) < 1e-10);
        assert!(characteristic_residual(&m, &phantom_nu(&m, 1.0)) < 1e-10);
    }

    #[test]
    fn perturbation_shows_in_residual() {
        let m = fixtures::phantom(12, 0.5).unwrap();
        let mut mu = phantom_nu(&m, 0.0);
        mu.add(m.state_id("5").unwrap(), m.action_id("a").unwrap(), 0.01)
            .unwrap();
        let r = characteristic_residual(&m, &mu);
        // The bump at 5 and its spillover into 6 (β·0.01) and 1 ((1−β)·0.01).
        assert!((r - 0.01).abs() < 1e-12, "{r}");
    }

    #[test]
    fn decomposition_of_phantom_example() {
        let m = fixtures::phantom(12, 0.5).unwrap();
        let d = decompose(&m, &phantom_nu(&m, 1.0), DecomposeOptions::default()).unwrap();
        assert!((d.invariant_part.total() - 2.0).abs() < 1e-10);
        assert!(d.occupation_part.max_abs_diff(&phantom_nu(&m, 0.0)) < 1e-10);
        assert!(d.residuals.invariance < 1e-10);

        let plain = decompose(&m, &phantom_nu(&m, 0.0), DecomposeOptions::default()).unwrap();
        assert!(plain.invariant_part.total() < 1e-12);
    }

    #[test]
    fn periodic_invariant_class_is_averaged() {
        // Deterministic 2-cycle {u, v} off the initial support.
        use crate::model::{validate_model, KernelRecord, ModelDocument};
        let rec = |f: &str, t: &str| KernelRecord {
            from: f.into(),
            action: "a".into(),
            to: t.into(),
            p: 1.0,
        };
        let doc = ModelDocument {
            states: vec!["x".into(), "u".into(), "v".into(), "d".into()],
            actions: ["x", "u", "v", "d"]
                .iter()
                .map(|s| (s.to_string(), vec!["a".to_string()]))
                .collect(),
            kernel: vec![rec("x", "d"), rec("u", "v"), rec("v", "u"), rec("d", "d")],
            initial: [("x".to_string(), 1.0)].into_iter().collect(),
            absorbing: vec!["d".into()],
        };
        let m = validate_model(&doc).unwrap();
        let a = m.action_id("a").unwrap();
        let mut mu = StateActionMeasure::new();
        mu.add(m.state_id("x").unwrap(), a, 1.0).unwrap();
        // Slightly unbalanced cycle mass: a solution within tolerance whose
        // tail oscillates with period 2.
        mu.add(m.state_id("u").unwrap(), a, 3.0 + 1e-10).unwrap();
        mu.add(m.state_id("v").unwrap(), a, 3.0 - 1e-10).unwrap();
        let d = decompose(&m, &mu, DecomposeOptions::default()).unwrap();
        assert_eq!(d.residuals.period, 2);
        assert!((d.invariant_part.get(m.state_id("u").unwrap(), a) - 3.0).abs() < 1e-12);
        assert!((d.invariant_part.total() - 6.0).abs() < 1e-12);
        assert!((d.occupation_part.total() - 1.0).abs() < 1e-8);
        assert!(d.residuals.reconstruction <= 1e-9);
    }

    #[test]
    fn non_solution_is_refused() {
        let m = fixtures::geometric(0.5).unwrap();
        let mut mu = StateActionMeasure::new();
        mu.add(StateId(0), ActionId(0), 1.0).unwrap();
        assert!(matches!(
            decompose(&m, &mu, DecomposeOptions::default()),
            Err(Error::NotASolution { .. })
        ));
    }

    #[test]
    fn phantom_directions() {
        let m = fixtures::phantom(12, 0.5).unwrap();
        let theta = find_phantom_direction(&m).unwrap().unwrap();
        let a = m.action_id("a").unwrap();
        assert!((theta.get(m.state_id("-1").unwrap(), a) - 0.5).abs() < 1e-12);
        assert!((theta.get(m.state_id("-2").unwrap(), a) - 0.5).abs() < 1e-12);
        assert_eq!(theta.len(), 2);

        assert!(find_phantom_direction(&fixtures::geometric(0.5).unwrap())
            .unwrap()
            .is_none());
        assert!(find_phantom_direction(&fixtures::tree(4).unwrap()).unwrap().is_none());
    }

    #[test]
    fn classification() {
        let m = fixtures::phantom(12, 0.5).unwrap();
        let lam = reference_measure(&m, ReferenceMeasureConfig::default()).unwrap();
        let c = classify(&m, &phantom_nu(&m, 1.0), &lam);
        assert_eq!(c.verdict, Verdict::Phantom);
        assert_eq!(c.evidence.names(&m), vec!["-1", "-2"]);
        assert_eq!(classify(&m, &phantom_nu(&m, 0.0), &lam).verdict, Verdict::Occupation);
        let mut bad = phantom_nu(&m, 0.0);
        bad.add(m.state_id("3").unwrap(), m.action_id("a").unwrap(), 0.1)
            .unwrap();
        assert_eq!(classify(&m, &bad, &lam).verdict, Verdict::NotSolution);
    }

    #[test]
    fn singularity() {
        let m = fixtures::phantom(12, 0.5).unwrap();
        let occ = phantom_nu(&m, 0.0);
        let theta = find_phantom_direction(&m).unwrap().unwrap();
        assert!(singularity_check(&m, &occ, &theta));
        assert!(singularity_check(&m, &occ, &StateActionMeasure::new()));
        assert!(!singularity_check(&m, &occ, &occ));
    }
}
