use std::fmt;

use thiserror::Error;

use crate::lp::LpError;

/// Category of a model validation failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvalidModelKind {
    RowMassViolation,
    AbsorbingSetNotClosed,
    UnknownState,
    UnknownAction,
    EmptyActionSet,
    BadInitialDistribution,
}

impl fmt::Display for InvalidModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            InvalidModelKind::RowMassViolation => "row mass violation",
            InvalidModelKind::AbsorbingSetNotClosed => "absorbing set not closed",
            InvalidModelKind::UnknownState => "unknown state",
            InvalidModelKind::UnknownAction => "unknown action",
            InvalidModelKind::EmptyActionSet => "empty action set",
            InvalidModelKind::BadInitialDistribution => "bad initial distribution",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model ({kind}): {detail}")]
    InvalidModel { kind: InvalidModelKind, detail: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("policy mismatch: {0}")]
    PolicyMismatch(String),

    #[error("measure puts mass off the feasible pairs: {0}")]
    SupportViolation(String),

    #[error("model is not absorbing from the initial distribution: {0}")]
    NonAbsorbing(String),

    #[error("singular transient system: {0}")]
    SingularSystem(String),

    #[error("policy family is empty")]
    EmptyFamily,

    #[error("state sets are not decreasing: set {index} is not contained in set {prev}", prev = .index - 1)]
    NotDecreasing { index: usize },

    #[error("measure is not a solution of the characteristic equations (residual {residual:e} > {tol:e})")]
    NotASolution { residual: f64, tol: f64 },

    #[error("tail iteration did not converge within {iterations} iterations (last l1 step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error("constraints exclude every occupation measure")]
    Infeasible,

    #[error("cost is unbounded below over the characteristic polytope")]
    Unbounded,

    #[error("bad parameter: {0}")]
    BadParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("every simulated trajectory was censored at the horizon")]
    AllCensored,
}

impl Error {
    pub(crate) fn invalid(kind: InvalidModelKind, detail: impl Into<String>) -> Self {
        Error::InvalidModel {
            kind,
            detail: detail.into(),
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
