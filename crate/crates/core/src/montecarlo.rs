//! Trajectory simulation, used as an independent check on the analytic
//! occupation values.
//!
//! Trajectory `i` of a batch with master seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `i`, so every
//! trajectory is fixed by `(s, i)` alone regardless of how the batch is
//! scheduled across threads. Visit counts are accumulated as integers,
//! which makes the aggregate independent of summation order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ActionId, Model, StateId};
use crate::policy::StationaryPolicy;

pub const DEFAULT_HORIZON: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HittingTime {
    Absorbed(usize),
    Censored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// State-action pairs visited before absorption (or up to the horizon).
    pub steps: Vec<(StateId, ActionId)>,
    pub final_state: StateId,
    pub absorbed: bool,
    pub hitting_time: HittingTime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub point: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub state: StateId,
    pub action: ActionId,
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationEstimate {
    /// One entry per feasible pair, in model order.
    pub cells: Vec<CellEstimate>,
    /// Total visits before absorption, i.e. the hitting time.
    pub total: Estimate,
    pub censored: usize,
    pub censored_fraction: f64,
}

fn sample_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64>) -> Option<usize> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return last;
            }
        }
    }
    // Rounding left `acc` just below one.
    last
}

fn run(model: &Model, policy: &StationaryPolicy, rng: &mut ChaCha8Rng, horizon: usize) -> Trajectory {
    let start = sample_index(rng, model.initial().iter().copied()).expect("initial distribution has mass");
    let mut x = StateId(start);
    let mut steps = Vec::new();
    while !model.is_absorbing(x) && steps.len() < horizon {
        let k = sample_index(rng, policy.probs(x).iter().copied()).expect("policy row has mass");
        steps.push((x, model.actions_of(x)[k]));
        let row = model.transitions(x, k);
        let j = sample_index(rng, row.iter().map(|&(_, p)| p)).expect("kernel row has mass");
        x = row[j].0;
    }
    let absorbed = model.is_absorbing(x);
    Trajectory {
        hitting_time: if absorbed {
            HittingTime::Absorbed(steps.len())
        } else {
            HittingTime::Censored
        },
        steps,
        final_state: x,
        absorbed,
    }
}

/// One trajectory from `X_0 ~ η`, stopped at the first entry into Δ or at
/// `horizon` steps.
pub fn simulate(model: &Model, policy: &StationaryPolicy, seed: u64, horizon: usize) -> Result<Trajectory> {
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    policy.check_against(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(run(model, policy, &mut rng, horizon))
}

#[derive(Default)]
struct Tally {
    sum: Vec<u64>,
    sum_sq: Vec<u128>,
    t_sum: u64,
    t_sum_sq: u128,
    censored: usize,
}

impl Tally {
    fn new(n: usize) -> Self {
        Tally {
            sum: vec![0; n],
            sum_sq: vec![0; n],
            ..Default::default()
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        self.t_sum += other.t_sum;
        self.t_sum_sq += other.t_sum_sq;
        self.censored += other.censored;
        self
    }
}

fn estimate(sum: u64, sum_sq: u128, n: usize) -> Estimate {
    let nf = n as f64;
    let point = sum as f64 / nf;
    let stderr = if n > 1 {
        // n Σc² − (Σc)² is exact in integers and never negative.
        let num = (n as u128) * sum_sq - (sum as u128) * (sum as u128);
        (num as f64 / (nf * (nf - 1.0)) / nf).sqrt()
    } else {
        0.0
    };
    Estimate {
        point,
        stderr,
        n_samples: n,
    }
}

/// Empirical occupation measure over `n_traj` trajectories. Censored
/// trajectories contribute the visits they made before the horizon.
pub fn estimate_occupation(
    model: &Model,
    policy: &StationaryPolicy,
    n_traj: usize,
    seed: u64,
    horizon: usize,
) -> Result<OccupationEstimate> {
    if n_traj < 1 {
        return Err(Error::InvalidArgument("at least one trajectory is required".into()));
    }
    if horizon < 1 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    policy.check_against(model)?;

    let pairs: Vec<(StateId, usize, ActionId)> = model.pairs().collect();
    let mut offset = vec![0usize; model.n_states() + 1];
    for x in model.states() {
        offset[x.0 + 1] = offset[x.0] + model.actions_of(x).len();
    }

    let tally = (0..n_traj as u64)
        .into_par_iter()
        .fold(
            || Tally::new(pairs.len()),
            |mut tally, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i);
                let traj = run(model, policy, &mut rng, horizon);
                let mut counts: std::collections::BTreeMap<usize, u64> = Default::default();
                for &(x, a) in &traj.steps {
                    let k = model.local_action(x, a).expect("simulated pairs are feasible");
                    *counts.entry(offset[x.0] + k).or_insert(0) += 1;
                }
                for (idx, c) in counts {
                    tally.sum[idx] += c;
                    tally.sum_sq[idx] += (c as u128) * (c as u128);
                }
                let t = traj.steps.len() as u64;
                tally.t_sum += t;
                tally.t_sum_sq += (t as u128) * (t as u128);
                if !traj.absorbed {
                    tally.censored += 1;
                }
                tally
            },
        )
        .reduce(|| Tally::new(pairs.len()), Tally::merge);

    if tally.censored == n_traj {
        return Err(Error::AllCensored);
    }
    if tally.censored > 0 {
        log::warn!(
            "{} of {n_traj} trajectories censored at horizon {horizon}",
            tally.censored
        );
    }

    let cells = pairs
        .iter()
        .enumerate()
        .map(|(i, &(x, _, a))| CellEstimate {
            state: x,
            action: a,
            estimate: estimate(tally.sum[i], tally.sum_sq[i], n_traj),
        })
        .collect();
    Ok(OccupationEstimate {
        cells,
        total: estimate(tally.t_sum, tally.t_sum_sq, n_traj),
        censored: tally.censored,
        censored_fraction: tally.censored as f64 / n_traj as f64,
    })
}
