//! Occupation measures and hitting-time diagnostics for a model run under a
//! stationary policy, plus the fully randomized reference policy and the
//! geometric reference measure built from it.
//!
//! The occupation marginal solves `(I - Pᵀ) m = η` over the transient
//! states reachable from the initial support, where `P` is the induced
//! kernel with mass entering the absorbing set removed. A truncated power
//! series `Σ η Pᵏ` serves as the fallback and as an independent check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::measure::{StateActionMeasure, StateMeasure, StateSet};
use crate::model::{Model, StateId};
use crate::policy::{induced_kernel, Kernel, StationaryPolicy};

/// Above this many transient states the dense solve is skipped and the
/// power series is used directly.
pub const DENSE_SOLVE_LIMIT: usize = 2_000;

/// Residual (sup norm) accepted from the dense solve before falling back.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OccupationOptions {
    /// Stop the power series once the circulating mass drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OccupationOptions {
    fn default() -> Self {
        OccupationOptions {
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

/// Hitting-time statistics of one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionReport {
    pub expected_hitting_time: f64,
    /// `survival[t] = P{T_Δ > t}` for `t = 0..=t_max`.
    pub survival: Vec<f64>,
    /// `tail[n] = Σ_{t≥n} P{T_Δ > t}` for `n = 0..=t_max`.
    pub tail: Vec<f64>,
}

/// Parameters of the reference measure λ^β.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceMeasureConfig {
    pub lambda_beta: f64,
    pub tol: f64,
}

impl Default for ReferenceMeasureConfig {
    fn default() -> Self {
        ReferenceMeasureConfig {
            lambda_beta: 0.5,
            tol: 1e-12,
        }
    }
}

/// Escaping mass `max_σ μ^X_σ(Γ_n)` together with the per-policy values it
/// is taken over.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapingProfile {
    pub sup: Vec<f64>,
    /// `per_policy[k][n] = μ^X_{σ_k}(Γ_n)`.
    pub per_policy: Vec<Vec<f64>>,
}

/// Linear system over the transient states reachable from a source under a
/// fixed induced kernel.
pub(crate) struct TransientSolver<'m> {
    kernel: Kernel,
    absorbing: &'m [bool],
    states: Vec<StateId>,
    pos: Vec<Option<usize>>,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    opts: OccupationOptions,
}

impl<'m> TransientSolver<'m> {
    /// `source` is a state vector; only its support outside Δ matters.
    pub(crate) fn new(
        model: &'m Model,
        policy: &StationaryPolicy,
        source: &[f64],
        opts: OccupationOptions,
    ) -> Result<Self> {
        let kernel = induced_kernel(model, policy)?;
        let absorbing = model.absorbing_mask();
        let n = model.n_states();

        let mut pos = vec![None; n];
        let mut states = Vec::new();
        let mut stack: Vec<StateId> = Vec::new();
        for x in model.states() {
            if source[x.0] > 0.0 && !absorbing[x.0] {
                pos[x.0] = Some(states.len());
                states.push(x);
                stack.push(x);
            }
        }
        while let Some(x) = stack.pop() {
            for &(y, _) in kernel.row(x) {
                if !absorbing[y.0] && pos[y.0].is_none() {
                    pos[y.0] = Some(states.len());
                    states.push(y);
                    stack.push(y);
                }
            }
        }

        // Every reachable transient state must be able to reach Δ;
        // otherwise some mass circulates forever.
        let mut drains = vec![false; states.len()];
        let mut changed = true;
        while changed {
            changed = false;
            for (i, &x) in states.iter().enumerate() {
                if !drains[i]
                    && kernel
                        .row(x)
                        .iter()
                        .any(|&(y, _)| absorbing[y.0] || pos[y.0].is_some_and(|j| drains[j]))
                {
                    drains[i] = true;
                    changed = true;
                }
            }
        }
        if let Some(i) = drains.iter().position(|d| !d) {
            let stuck: Vec<&str> = states
                .iter()
                .zip(&drains)
                .filter(|(_, d)| !**d)
                .map(|(&x, _)| model.state_name(x))
                .collect();
            log::debug!(
                "non-absorbing: {} of {} transient states never drain",
                stuck.len(),
                states.len()
            );
            return Err(Error::NonAbsorbing(format!(
                "state {:?} cannot reach the absorbing set (closed class {:?})",
                model.state_name(states[i]),
                stuck
            )));
        }

        let lu = if states.len() <= DENSE_SOLVE_LIMIT && !states.is_empty() {
            let dim = states.len();
            let mut a = DMatrix::<f64>::identity(dim, dim);
            for (i, &x) in states.iter().enumerate() {
                for &(y, p) in kernel.row(x) {
                    if let Some(j) = pos[y.0] {
                        a[(j, i)] -= p;
                    }
                }
            }
            Some(a.lu())
        } else {
            None
        };

        Ok(TransientSolver {
            kernel,
            absorbing,
            states,
            pos,
            lu,
            opts,
        })
    }

    pub(crate) fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// `start 𝕀_{Δ^c} Σ_k Pᵏ` as a full state vector. `start` must be
    /// supported on the solver's states (plus Δ, which is ignored).
    pub(crate) fn occupation(&self, start: &[f64]) -> Result<Vec<f64>> {
        let n = start.len();
        if self.states.is_empty() {
            return Ok(vec![0.0; n]);
        }
        if let Some((x, _)) = start
            .iter()
            .enumerate()
            .find(|&(x, &v)| v > 0.0 && !self.absorbing[x] && self.pos[x].is_none())
        {
            return Err(Error::InvalidArgument(format!(
                "start mass at state #{x} outside the solved region"
            )));
        }
        if let Some(lu) = &self.lu {
            let rhs = DVector::from_iterator(self.states.len(), self.states.iter().map(|x| start[x.0]));
            if let Some(sol) = lu.solve(&rhs) {
                let mut out = vec![0.0; n];
                for (i, &x) in self.states.iter().enumerate() {
                    out[x.0] = sol[i].max(0.0);
                }
                let res = self.residual(start, &out);
                if res <= SOLVE_RESIDUAL_TOL * rhs.amax().max(1.0) {
                    return Ok(out);
                }
                log::warn!("dense solve residual {res:e}; falling back to power series");
            } else {
                log::warn!("dense solve failed; falling back to power series");
            }
        }
        self.series(start).map_err(|e| match e {
            Error::NonAbsorbing(msg) if self.lu.is_some() => Error::SingularSystem(msg),
            other => other,
        })
    }

    /// Power-series accumulation of the occupation marginal.
    pub(crate) fn series(&self, start: &[f64]) -> Result<Vec<f64>> {
        let mut term: Vec<f64> = start
            .iter()
            .zip(self.absorbing)
            .map(|(&v, &d)| if d { 0.0 } else { v })
            .collect();
        let mut acc = vec![0.0; start.len()];
        for _ in 0..self.opts.max_iter {
            let mass: f64 = term.iter().sum();
            if mass < self.opts.tol {
                return Ok(acc);
            }
            for (a, t) in acc.iter_mut().zip(&term) {
                *a += t;
            }
            term = self.kernel.push_forward_killed(&term, self.absorbing);
        }
        let remaining: f64 = term.iter().sum();
        Err(Error::NonAbsorbing(format!(
            "circulating mass {remaining:e} after {} iterations",
            self.opts.max_iter
        )))
    }

    /// Sup-norm residual of `m = start 𝕀_{Δ^c} + m P` on the solved states.
    fn residual(&self, start: &[f64], m: &[f64]) -> f64 {
        let flow = self.kernel.push_forward_killed(m, self.absorbing);
        self.states
            .iter()
            .map(|x| (m[x.0] - start[x.0] - flow[x.0]).abs())
            .fold(0.0, f64::max)
    }
}

fn killed_initial(model: &Model) -> Vec<f64> {
    model
        .initial()
        .iter()
        .zip(model.absorbing_mask())
        .map(|(&v, &d)| if d { 0.0 } else { v })
        .collect()
}

/// State marginal of the occupation measure of `policy` from the model's
/// initial distribution.
pub fn occupation_marginal(model: &Model, policy: &StationaryPolicy, opts: OccupationOptions) -> Result<StateMeasure> {
    let solver = TransientSolver::new(model, policy, model.initial(), opts)?;
    Ok(StateMeasure::from_values(solver.occupation(model.initial())?))
}

/// The same marginal computed only by the power series. Kept separate so it
/// can serve as an independent check on the linear solve.
pub fn occupation_marginal_by_series(
    model: &Model,
    policy: &StationaryPolicy,
    opts: OccupationOptions,
) -> Result<StateMeasure> {
    let kernel = induced_kernel(model, policy)?;
    let absorbing = model.absorbing_mask();
    let mut term = killed_initial(model);
    let mut acc = vec![0.0; model.n_states()];
    for _ in 0..opts.max_iter {
        if term.iter().sum::<f64>() < opts.tol {
            return Ok(StateMeasure::from_values(acc));
        }
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += t;
        }
        term = kernel.push_forward_killed(&term, absorbing);
    }
    Err(Error::NonAbsorbing(format!(
        "circulating mass {:e} after {} iterations",
        term.iter().sum::<f64>(),
        opts.max_iter
    )))
}

/// Occupation measure μ_{η,σ} = μ^X ⊗ σ.
pub fn occupation_measure(
    model: &Model,
    policy: &StationaryPolicy,
    opts: OccupationOptions,
) -> Result<StateActionMeasure> {
    let marginal = occupation_marginal(model, policy, opts)?;
    Ok(StateActionMeasure::product(model, &marginal, policy))
}

/// E_{η,σ}[T_Δ], the total occupation mass.
pub fn expected_hitting_time(model: &Model, policy: &StationaryPolicy) -> Result<f64> {
    Ok(occupation_marginal(model, policy, OccupationOptions::default())?.total())
}

/// `P{T_Δ > t}` for `t = 0..=t_max`.
pub fn survival_curve(model: &Model, policy: &StationaryPolicy, t_max: usize) -> Result<Vec<f64>> {
    let kernel = induced_kernel(model, policy)?;
    let absorbing = model.absorbing_mask();
    let mut dist = killed_initial(model);
    let mut out = Vec::with_capacity(t_max + 1);
    for t in 0..=t_max {
        out.push(dist.iter().sum::<f64>().clamp(0.0, 1.0));
        if t < t_max {
            dist = kernel.push_forward_killed(&dist, absorbing);
        }
    }
    Ok(out)
}

/// Tail sums `Σ_{t≥n} P{T_Δ > t}` for `n = 0..=n_max`. Each entry is the
/// occupation mass of the chain restarted from the time-`n` law.
fn tail_sums(model: &Model, policy: &StationaryPolicy, n_max: usize) -> Result<Vec<f64>> {
    let solver = TransientSolver::new(model, policy, model.initial(), OccupationOptions::default())?;
    let absorbing = model.absorbing_mask();
    let mut dist = killed_initial(model);
    let mut out = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        out.push(solver.occupation(&dist)?.iter().sum());
        if n < n_max {
            dist = solver.kernel().push_forward_killed(&dist, absorbing);
        }
    }
    Ok(out)
}

pub fn tail_sum(model: &Model, policy: &StationaryPolicy, n: usize) -> Result<f64> {
    Ok(*tail_sums(model, policy, n)?.last().expect("n_max + 1 entries"))
}

/// Survival curve and tail sums up to `t_max`, with the expected hitting
/// time.
pub fn absorption_report(model: &Model, policy: &StationaryPolicy, t_max: usize) -> Result<AbsorptionReport> {
    let tail = tail_sums(model, policy, t_max)?;
    Ok(AbsorptionReport {
        expected_hitting_time: tail[0],
        survival: survival_curve(model, policy, t_max)?,
        tail,
    })
}

/// `max_σ Σ_{t≥n} P_σ{T_Δ > t}` over the family, for `n = 0..=n_max`.
pub fn uniform_absorption_profile(model: &Model, family: &[StationaryPolicy], n_max: usize) -> Result<Vec<f64>> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    let mut profile = vec![0.0_f64; n_max + 1];
    for policy in family {
        for (p, t) in profile.iter_mut().zip(tail_sums(model, policy, n_max)?) {
            *p = p.max(t);
        }
    }
    Ok(profile)
}

/// `max_σ μ^X_σ(Γ_n)` for a decreasing sequence of sets.
pub fn escaping_mass(model: &Model, family: &[StationaryPolicy], gammas: &[StateSet]) -> Result<EscapingProfile> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if let Some(index) = (1..gammas.len()).find(|&i| !gammas[i].is_subset(&gammas[i - 1])) {
        return Err(Error::NotDecreasing { index });
    }
    let per_policy = family
        .iter()
        .map(|policy| {
            let m = occupation_marginal(model, policy, OccupationOptions::default())?;
            Ok(gammas.iter().map(|g| m.mass_on(g)).collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let sup = (0..gammas.len())
        .map(|n| per_policy.iter().map(|row| row[n]).fold(0.0, f64::max))
        .collect();
    Ok(EscapingProfile { sup, per_policy })
}

/// The fully randomized policy ξ*: the k-th available action gets weight
/// 2^{-(k+1)}, renormalized over the finite action set.
pub fn reference_policy(model: &Model) -> StationaryPolicy {
    let probs = model
        .states()
        .map(|x| {
            let m = model.actions_of(x).len() as i32;
            let norm = 1.0 - 0.5_f64.powi(m);
            (0..m).map(|k| 0.5_f64.powi(k + 1) / norm).collect()
        })
        .collect();
    StationaryPolicy::from_probs(model, probs).expect("ξ* rows are distributions")
}

/// λ^β = (1-β) Σ_k β^k η Q_{ξ*}^k, truncated once the remaining geometric
/// weight is below `tol` (and never before `n_states` terms, so every
/// reachable state is hit), then renormalized.
pub fn reference_measure(model: &Model, cfg: ReferenceMeasureConfig) -> Result<StateMeasure> {
    let beta = cfg.lambda_beta;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BadParameter(format!("lambda_beta {beta} not in (0,1)")));
    }
    if cfg.tol.is_nan() || cfg.tol <= 0.0 {
        return Err(Error::BadParameter(format!("tolerance {} must be positive", cfg.tol)));
    }
    let kernel = induced_kernel(model, &reference_policy(model))?;
    let mut term = model.initial().to_vec();
    let mut acc = vec![0.0; model.n_states()];
    let mut weight = 1.0 - beta;
    let mut k = 0usize;
    loop {
        for (a, t) in acc.iter_mut().zip(&term) {
            *a += weight * t;
        }
        // Remaining weight (1-β) Σ_{j>k} β^j = β^{k+1}.
        let remaining = weight / (1.0 - beta) * beta;
        if remaining < cfg.tol && k + 1 >= model.n_states() {
            break;
        }
        term = kernel.push_forward(&term);
        weight *= beta;
        k += 1;
    }
    let total: f64 = acc.iter().sum();
    Ok(StateMeasure::from_values(acc.into_iter().map(|v| v / total).collect()))
}
