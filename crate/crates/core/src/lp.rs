//! Dense two-phase primal simplex with Bland's rule.
//!
//! Problems are stated as `min cᵀx` subject to linear rows (`≤`, `≥`, `=`)
//! and per-variable bounds `l ≤ x ≤ u` (lower bound `-∞` allowed for free
//! variables). They are brought to standard form `A y = b, y ≥ 0` with
//! slacks, surplus variables and artificials. Once a final basis is found,
//! the basic values are recomputed from the original data (LU for a square
//! basis, least squares via SVD when redundant rows remain), which keeps the
//! reported point accurate even after many pivots.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Entries at or below this magnitude are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-11;
/// Phase-1 optimum above this certifies infeasibility.
pub const INFEASIBILITY_TOL: f64 = 1e-9;
/// Reported points satisfy every row within this.
pub const CONSTRAINT_TOL: f64 = 1e-9;
/// Reported points satisfy every bound within this.
pub const BOUND_TOL: f64 = 1e-12;
pub const PIVOT_BUDGET: usize = 1_000_000;

const COST_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("LP dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("LP numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    /// Minimized.
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<Option<f64>>,
}

impl LpProblem {
    /// Nonnegative variables, no rows.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        LpProblem {
            objective,
            constraints: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![None; n],
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self
    }

    pub fn add_eq(&mut self, coeffs: Vec<f64>, rhs: f64) -> &mut Self {
        self.add(coeffs, Relation::Eq, rhs)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: Option<f64>) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::DimensionMismatch(format!(
                "{} variables but {} lower / {} upper bounds",
                n,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::DimensionMismatch(format!(
                    "row {i} has {} coefficients, expected {n}",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::DimensionMismatch(format!("row {i} has non-finite data")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::DimensionMismatch("non-finite objective".into()));
        }
        for j in 0..n {
            let l = self.lower[j];
            if l.is_nan() || l == f64::INFINITY {
                return Err(LpError::DimensionMismatch(format!("bad lower bound on x{j}")));
            }
            if let Some(u) = self.upper[j] {
                if !u.is_finite() || u < l {
                    return Err(LpError::DimensionMismatch(format!("bad upper bound on x{j}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Empty unless `status` is `Optimal`.
    pub solution: Vec<f64>,
    pub value: f64,
    pub pivots: usize,
}

/// How an original variable maps onto standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Shifted { col: usize, lower: f64 },
    Free { pos: usize, neg: usize },
}

struct StandardForm {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    cost: Vec<f64>,
    n_cols: usize,
    /// Column that can start the basis for each row (slack with +1), if any.
    start: Vec<Option<usize>>,
    vars: Vec<VarMap>,
}

fn standard_form(p: &LpProblem) -> StandardForm {
    let mut vars = Vec::with_capacity(p.n_vars());
    let mut n_cols = 0;
    for &l in &p.lower {
        if l == f64::NEG_INFINITY {
            vars.push(VarMap::Free {
                pos: n_cols,
                neg: n_cols + 1,
            });
            n_cols += 2;
        } else {
            vars.push(VarMap::Shifted { col: n_cols, lower: l });
            n_cols += 1;
        }
    }

    // Rows in terms of original variables: (coeffs, relation, rhs).
    let mut rows: Vec<(Vec<f64>, Relation, f64)> = p
        .constraints
        .iter()
        .map(|c| (c.coeffs.clone(), c.relation, c.rhs))
        .collect();
    for (j, u) in p.upper.iter().enumerate() {
        if let Some(u) = *u {
            let mut coeffs = vec![0.0; p.n_vars()];
            coeffs[j] = 1.0;
            rows.push((coeffs, Relation::Le, u));
        }
    }

    let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
    let total = n_cols + n_slack;
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    let mut start = Vec::with_capacity(rows.len());
    let mut slack = n_cols;
    for (coeffs, rel, rhs) in rows {
        let mut row = vec![0.0; total];
        let mut rhs = rhs;
        for (j, &c) in coeffs.iter().enumerate() {
            match vars[j] {
                VarMap::Shifted { col, lower } => {
                    row[col] = c;
                    rhs -= c * lower;
                }
                VarMap::Free { pos, neg } => {
                    row[pos] = c;
                    row[neg] = -c;
                }
            }
        }
        let slack_col = match rel {
            Relation::Le => {
                row[slack] = 1.0;
                slack += 1;
                Some(slack - 1)
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
                Some(slack - 1)
            }
            Relation::Eq => None,
        };
        if rhs < 0.0 {
            rhs = -rhs;
            row.iter_mut().for_each(|v| *v = -*v);
        }
        start.push(slack_col.filter(|&s| row[s] == 1.0));
        a.push(row);
        b.push(rhs);
    }

    let mut cost = vec![0.0; total];
    for (j, &c) in p.objective.iter().enumerate() {
        match vars[j] {
            VarMap::Shifted { col, .. } => cost[col] = c,
            VarMap::Free { pos, neg } => {
                cost[pos] = c;
                cost[neg] = -c;
            }
        }
    }

    StandardForm {
        a,
        b,
        cost,
        n_cols: total,
        start,
        vars,
    }
}

struct Tableau {
    rows: Vec<Vec<f64>>, // last entry is the rhs
    basis: Vec<usize>,
    reduced: Vec<f64>, // reduced costs; last entry is -value
    width: usize,
    pivots: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn price(&mut self, cost: &[f64]) {
        let mut reduced = vec![0.0; self.width + 1];
        reduced[..cost.len()].copy_from_slice(cost);
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = reduced[bv];
            if cb != 0.0 {
                for (r, v) in reduced.iter_mut().zip(&self.rows[i]) {
                    *r -= cb * v;
                }
            }
        }
        self.reduced = reduced;
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[c];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                    row[c] = 0.0;
                }
            }
        }
        let f = self.reduced[c];
        if f != 0.0 {
            for (v, p) in self.reduced.iter_mut().zip(&prow) {
                *v -= f * p;
            }
            self.reduced[c] = 0.0;
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Runs Bland's rule over columns `< allowed`.
    fn run(&mut self, allowed: usize) -> Result<PhaseEnd, LpError> {
        loop {
            if self.pivots >= PIVOT_BUDGET {
                return Err(LpError::NumericalFailure(format!(
                    "pivot budget {PIVOT_BUDGET} exhausted"
                )));
            }
            let Some(enter) = (0..allowed).find(|&j| self.reduced[j] < -COST_TOL) else {
                return Ok(PhaseEnd::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[enter];
                if a > PIVOT_TOL {
                    let ratio = row[self.width].max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Ok(PhaseEnd::Unbounded),
            }
        }
    }
}

/// Solves the problem; see the module docs for the method.
pub fn solve_lp(problem: &LpProblem) -> Result<LpOutcome, LpError> {
    problem.check()?;
    let sf = standard_form(problem);
    let m = sf.a.len();
    let n = sf.n_cols;

    // Artificial columns for rows without a usable slack.
    let art_rows: Vec<usize> = (0..m).filter(|&i| sf.start[i].is_none()).collect();
    let width = n + art_rows.len();
    let mut rows = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut next_art = n;
    for i in 0..m {
        let mut row = vec![0.0; width + 1];
        row[..n].copy_from_slice(&sf.a[i]);
        row[width] = sf.b[i];
        match sf.start[i] {
            Some(s) => basis.push(s),
            None => {
                row[next_art] = 1.0;
                basis.push(next_art);
                next_art += 1;
            }
        }
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        basis,
        reduced: Vec::new(),
        width,
        pivots: 0,
    };

    // Phase 1.
    if !art_rows.is_empty() {
        let mut phase1 = vec![0.0; width];
        phase1[n..].iter_mut().for_each(|v| *v = 1.0);
        tab.price(&phase1);
        tab.run(width)?;
        let infeas = -tab.reduced[width];
        log::trace!("phase 1 optimum {infeas:e} after {} pivots", tab.pivots);
        if infeas > INFEASIBILITY_TOL {
            return Ok(LpOutcome {
                status: LpStatus::Infeasible,
                solution: Vec::new(),
                value: f64::NAN,
                pivots: tab.pivots,
            });
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut i = 0;
        while i < tab.rows.len() {
            if tab.basis[i] >= n {
                match (0..n).find(|&j| tab.rows[i][j].abs() > PIVOT_TOL) {
                    Some(j) => tab.pivot(i, j),
                    None => {
                        tab.rows.remove(i);
                        tab.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }

    // Phase 2.
    tab.price(&sf.cost);
    let end = tab.run(n)?;
    if let PhaseEnd::Unbounded = end {
        return Ok(LpOutcome {
            status: LpStatus::Unbounded,
            solution: Vec::new(),
            value: f64::NEG_INFINITY,
            pivots: tab.pivots,
        });
    }

    let y = refine_basic_solution(&sf, &tab)?;
    let x: Vec<f64> = sf
        .vars
        .iter()
        .map(|v| match *v {
            VarMap::Shifted { col, lower } => lower + y[col],
            VarMap::Free { pos, neg } => y[pos] - y[neg],
        })
        .collect();
    verify(problem, &x)?;
    let value = problem.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        solution: x,
        value,
        pivots: tab.pivots,
    })
}

/// Recomputes the basic values from the original standard-form data.
fn refine_basic_solution(sf: &StandardForm, tab: &Tableau) -> Result<Vec<f64>, LpError> {
    let mut y = vec![0.0; sf.n_cols];
    let basis = &tab.basis;
    if basis.is_empty() {
        return Ok(y);
    }
    // Redundant rows were dropped in phase 1, so the basis matrix may be
    // tall; the system is consistent and SVD gives its exact solution.
    let m = sf.a.len();
    let k = basis.len();
    let bmat = DMatrix::from_fn(m, k, |i, j| sf.a[i][basis[j]]);
    let rhs = DVector::from_column_slice(&sf.b);
    let solved = if m == k {
        bmat.lu().solve(&rhs)
    } else {
        bmat.svd(true, true).solve(&rhs, 1e-13).ok()
    };
    let from_tableau = |i: usize| tab.rows[i][tab.width];
    match solved {
        Some(sol) => {
            for (j, &col) in basis.iter().enumerate() {
                y[col] = sol[j];
            }
        }
        None => {
            log::warn!("basis refinement failed; using tableau values");
            for (i, &col) in basis.iter().enumerate() {
                y[col] = from_tableau(i);
            }
        }
    }
    for v in y.iter_mut() {
        if *v < 0.0 {
            if *v < -CONSTRAINT_TOL {
                return Err(LpError::NumericalFailure(format!("basic value {v:e} is negative")));
            }
            *v = 0.0;
        }
    }
    Ok(y)
}

fn verify(problem: &LpProblem, x: &[f64]) -> Result<(), LpError> {
    for (i, c) in problem.constraints.iter().enumerate() {
        let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let viol = match c.relation {
            Relation::Le => (lhs - c.rhs).max(0.0),
            Relation::Ge => (c.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - c.rhs).abs(),
        };
        if viol > CONSTRAINT_TOL {
            return Err(LpError::NumericalFailure(format!("row {i} violated by {viol:e}")));
        }
    }
    for (j, &v) in x.iter().enumerate() {
        let lo = problem.lower[j];
        if v < lo - BOUND_TOL || problem.upper[j].is_some_and(|u| v > u + BOUND_TOL) {
            return Err(LpError::NumericalFailure(format!("x{j} = {v} outside its bounds")));
        }
    }
    Ok(())
}
