//! Occupation measures of absorbing Markov decision processes on finite
//! (or finitely truncated) state spaces.
//!
//! The crate computes occupation measures of stationary policies, checks and
//! decomposes solutions of the characteristic equations
//! `μ(K^c) = 0, μ^X = (η + μQ)𝕀_{Δ^c}` into an occupation part and an
//! invariant ("phantom") part, classifies measures against the reference
//! measure λ^β, solves constrained total-cost problems by linear
//! programming, and cross-checks everything by simulation.

pub mod absorption;
pub mod characteristic;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod lp;
pub mod measure;
pub mod model;
pub mod montecarlo;
pub mod planner;
pub mod policy;

pub use absorption::{
    absorption_report, escaping_mass, expected_hitting_time, occupation_marginal, occupation_marginal_by_series,
    occupation_measure, reference_measure, reference_policy, survival_curve, tail_sum, uniform_absorption_profile,
    AbsorptionReport, EscapingProfile, OccupationOptions, ReferenceMeasureConfig,
};
pub use characteristic::{
    characteristic_residual, classify, classify_with_tolerance, decompose, find_phantom_direction, singular_overlap,
    singularity_check, Classification, DecomposeOptions, DecompositionResult, Verdict,
};
pub use error::{Error, InvalidModelKind, Result};
pub use measure::{disintegrate, StateActionMeasure, StateMeasure, StateSet};
pub use model::{reachable_states, validate_model, ActionId, Model, ModelDocument, StateId};
pub use planner::{solve_constrained, Plan, PlanningProblem};
pub use policy::{induced_kernel, Kernel, StationaryPolicy};
