//! Self-contained linear-program feasibility and optimization.
//!
//! A dense two-phase simplex over a standard-form tableau. Phase 1 minimizes
//! the total artificial mass (bounded below by zero, so feasibility solves
//! cannot be unbounded); phase 2, when an objective is supplied, optimizes
//! over the feasible basis. Pivoting uses the most-negative reduced cost and
//! switches to Bland's rule if the objective stalls, which breaks cycles.
//!
//! Equality constraints are split into a `<=`/`>=` pair internally, variable
//! lower bounds are shifted out, and finite upper bounds become extra rows.
//! Callers that need total-variation constraints of the form
//! `sum_t |c_t . x - f_t| <= b` linearize them with one slack per term and a
//! budget row `sum s_t <= 2b`; this module stays generic.

use thiserror::Error;

/// A returned witness may violate no constraint by more than this.
pub const FEASIBILITY_TOL: f64 = 1e-7;
/// Entries smaller than this are never used as pivots.
pub const PIVOT_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("problem is infeasible")]
    Infeasible,
    #[error("objective is unbounded")]
    Unbounded,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Per-variable bounds; the default is `0 <= x < +inf`.
#[derive(Debug, Clone, Copy)]
pub struct VarBounds {
    pub lower: f64,
    pub upper: Option<f64>,
}

impl Default for VarBounds {
    fn default() -> Self {
        Self {
            lower: 0.0,
            upper: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpProblem {
    num_vars: usize,
    constraints: Vec<Constraint>,
    bounds: Vec<VarBounds>,
}

impl LpProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            constraints: Vec::new(),
            bounds: vec![VarBounds::default(); num_vars],
        }
    }

    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, bounds: VarBounds) {
        self.bounds[var] = bounds;
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn bounds(&self) -> &[VarBounds] {
        &self.bounds
    }

    fn validate(&self) -> Result<(), LpError> {
        if self.num_vars == 0 {
            return Err(LpError::Malformed("no variables".into()));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != self.num_vars {
                return Err(LpError::Malformed(format!(
                    "constraint {i} has {} coefficients, expected {}",
                    c.coeffs.len(),
                    self.num_vars
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
                return Err(LpError::Malformed(format!(
                    "constraint {i} has non-finite data"
                )));
            }
        }
        for (j, b) in self.bounds.iter().enumerate() {
            if !b.lower.is_finite() {
                return Err(LpError::Malformed(format!(
                    "variable {j} has non-finite lower bound"
                )));
            }
            if let Some(u) = b.upper {
                if !u.is_finite() {
                    return Err(LpError::Malformed(format!(
                        "variable {j} has non-finite upper bound"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Largest violation of the original constraints and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, b) in self.bounds.iter().enumerate() {
            worst = worst.max(b.lower - x[j]);
            if let Some(u) = b.upper {
                worst = worst.max(x[j] - u);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// A witness point when feasible; empty otherwise.
    pub assignment: Vec<f64>,
    /// For a feasible solution, the worst constraint violation of the
    /// witness; for an infeasible verdict, the residual artificial mass.
    pub max_violation: f64,
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexConfig {
    pub feas_tol: f64,
    pub pivot_tol: f64,
    pub max_iters: usize,
}

impl Default for SimplexConfig {
    fn default() -> Self {
        Self {
            feas_tol: FEASIBILITY_TOL,
            pivot_tol: PIVOT_TOL,
            max_iters: 0, // 0 = derive from problem size
        }
    }
}

/// Decide whether any point satisfies every constraint within tolerance.
/// Deterministic: identical input yields an identical verdict and witness.
pub fn lp_feasible(problem: &LpProblem) -> Result<LpSolution, LpError> {
    lp_feasible_with(problem, &SimplexConfig::default())
}

pub fn lp_feasible_with(
    problem: &LpProblem,
    config: &SimplexConfig,
) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let mut tab = Tableau::build(problem, config)?;
    match tab.phase1()? {
        Phase1::Feasible => {
            let x = tab.extract(problem);
            Ok(LpSolution {
                status: LpStatus::Feasible,
                max_violation: problem.max_violation(&x),
                assignment: x,
                objective: None,
            })
        }
        Phase1::Infeasible(residual) => Ok(LpSolution {
            status: LpStatus::Infeasible,
            assignment: Vec::new(),
            max_violation: residual,
            objective: None,
        }),
    }
}

/// Minimize `objective . x` subject to the problem's constraints.
pub fn lp_minimize(problem: &LpProblem, objective: &[f64]) -> Result<LpSolution, LpError> {
    lp_minimize_with(problem, objective, &SimplexConfig::default())
}

pub fn lp_maximize(problem: &LpProblem, objective: &[f64]) -> Result<LpSolution, LpError> {
    let neg: Vec<f64> = objective.iter().map(|c| -c).collect();
    let mut sol = lp_minimize(problem, &neg)?;
    sol.objective = sol.objective.map(|v| -v);
    Ok(sol)
}

pub fn lp_minimize_with(
    problem: &LpProblem,
    objective: &[f64],
    config: &SimplexConfig,
) -> Result<LpSolution, LpError> {
    problem.validate()?;
    if objective.len() != problem.num_vars {
        return Err(LpError::Malformed(format!(
            "objective has {} coefficients, expected {}",
            objective.len(),
            problem.num_vars
        )));
    }
    if objective.iter().any(|c| !c.is_finite()) {
        return Err(LpError::Malformed("objective has non-finite data".into()));
    }
    let mut tab = Tableau::build(problem, config)?;
    match tab.phase1()? {
        Phase1::Infeasible(_) => Err(LpError::Infeasible),
        Phase1::Feasible => {
            tab.phase2(objective)?;
            let x = tab.extract(problem);
            let value: f64 = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            Ok(LpSolution {
                status: LpStatus::Feasible,
                max_violation: problem.max_violation(&x),
                assignment: x,
                objective: Some(value),
            })
        }
    }
}

enum Phase1 {
    Feasible,
    Infeasible(f64),
}

#[derive(Clone, Copy, PartialEq)]
enum PivotRule {
    Dantzig,
    Bland,
}

/// Dense simplex tableau in standard form. Column layout:
/// `[structural | one slack or surplus per row | artificials] rhs`.
struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    nv: usize,
    art_start: usize,
    ncols: usize,
    shifts: Vec<f64>,
    pivot_tol: f64,
    feas_tol: f64,
    max_iters: usize,
}

impl Tableau {
    fn build(problem: &LpProblem, config: &SimplexConfig) -> Result<Self, LpError> {
        let nv = problem.num_vars;
        let shifts: Vec<f64> = problem.bounds.iter().map(|b| b.lower).collect();

        // Standardized rows over the shifted variables y = x - lower >= 0,
        // with equalities split and right-hand sides made nonnegative.
        let mut std_rows: Vec<(Vec<f64>, bool, f64)> = Vec::new(); // (coeffs, is_ge, rhs)
        let mut push = |coeffs: Vec<f64>, ge: bool, rhs: f64| {
            if rhs < 0.0 {
                let flipped = coeffs.iter().map(|a| -a).collect();
                std_rows.push((flipped, !ge, -rhs));
            } else {
                std_rows.push((coeffs, ge, rhs));
            }
        };
        for c in &problem.constraints {
            let shift_dot: f64 = c.coeffs.iter().zip(&shifts).map(|(a, s)| a * s).sum();
            let rhs = c.rhs - shift_dot;
            match c.relation {
                Relation::Le => push(c.coeffs.clone(), false, rhs),
                Relation::Ge => push(c.coeffs.clone(), true, rhs),
                Relation::Eq => {
                    push(c.coeffs.clone(), false, rhs);
                    push(c.coeffs.clone(), true, rhs);
                }
            }
        }
        for (j, b) in problem.bounds.iter().enumerate() {
            if let Some(u) = b.upper {
                let mut coeffs = vec![0.0; nv];
                coeffs[j] = 1.0;
                push(coeffs, false, u - b.lower);
            }
        }

        let m = std_rows.len();
        let n_ge = std_rows.iter().filter(|(_, ge, _)| *ge).count();
        let art_start = nv + m;
        let ncols = art_start + n_ge;

        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut art_idx = art_start;
        for (r, (coeffs, ge, rhs)) in std_rows.into_iter().enumerate() {
            let mut row = vec![0.0; ncols + 1];
            row[..nv].copy_from_slice(&coeffs);
            row[nv + r] = if ge { -1.0 } else { 1.0 };
            row[ncols] = rhs;
            if ge {
                row[art_idx] = 1.0;
                basis.push(art_idx);
                art_idx += 1;
            } else {
                basis.push(nv + r);
            }
            rows.push(row);
        }

        let max_iters = if config.max_iters > 0 {
            config.max_iters
        } else {
            200 * (m + ncols) + 1_000
        };

        Ok(Self {
            rows,
            obj: vec![0.0; ncols + 1],
            basis,
            nv,
            art_start,
            ncols,
            shifts,
            pivot_tol: config.pivot_tol,
            feas_tol: config.feas_tol,
            max_iters,
        })
    }

    /// Install cost vector `c` (length ncols) and price out basic columns.
    fn install_costs(&mut self, costs: &[f64]) {
        self.obj[..self.ncols].copy_from_slice(costs);
        self.obj[self.ncols] = 0.0;
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = costs[b];
            if cb != 0.0 {
                let row = &self.rows[r];
                for (o, &v) in self.obj.iter_mut().zip(row.iter()) {
                    *o -= cb * v;
                }
            }
        }
    }

    fn objective_value(&self) -> f64 {
        -self.obj[self.ncols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= pv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, &pvj) in row.iter_mut().zip(&pivot_row) {
                    *v -= factor * pvj;
                }
                row[c] = 0.0;
            }
        }
        let factor = self.obj[c];
        if factor != 0.0 {
            for (v, &pvj) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= factor * pvj;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Run simplex iterations until optimal, unbounded, or the limit.
    /// `allow(col)` filters candidate entering columns.
    fn iterate<F: Fn(usize) -> bool>(&mut self, allow: F) -> Result<(), LpError> {
        let mut rule = PivotRule::Dantzig;
        let mut best = f64::INFINITY;
        let mut stall = 0usize;
        const STALL_LIMIT: usize = 100;

        for iter in 0..self.max_iters {
            let entering = match rule {
                PivotRule::Dantzig => {
                    let mut best_c = None;
                    let mut best_rc = -self.pivot_tol;
                    for c in 0..self.ncols {
                        if allow(c) && self.obj[c] < best_rc {
                            best_rc = self.obj[c];
                            best_c = Some(c);
                        }
                    }
                    best_c
                }
                PivotRule::Bland => {
                    (0..self.ncols).find(|&c| allow(c) && self.obj[c] < -self.pivot_tol)
                }
            };
            let Some(c) = entering else {
                return Ok(());
            };

            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][c];
                if a > self.pivot_tol {
                    let ratio = self.rows[r][self.ncols] / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - self.pivot_tol
                                || (ratio < lratio + self.pivot_tol
                                    && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(r, c);

            let val = self.objective_value();
            if log::log_enabled!(log::Level::Trace) {
                log::trace!("iter {iter}: pivot ({r}, {c}), objective {val}");
                self.trace_dump();
            }
            if val < best - 1e-12 {
                best = val;
                stall = 0;
            } else {
                stall += 1;
                if stall > STALL_LIMIT && rule == PivotRule::Dantzig {
                    rule = PivotRule::Bland;
                    log::trace!("objective stalled; switching to Bland's rule");
                }
            }
        }
        Err(LpError::IterationLimit(self.max_iters))
    }

    /// Tableau dump at trace verbosity, elided for large problems.
    fn trace_dump(&self) {
        if self.rows.len() > 12 || self.ncols > 24 {
            log::trace!(
                "tableau {} rows x {} cols (elided), basis {:?}",
                self.rows.len(),
                self.ncols,
                self.basis
            );
            return;
        }
        for (r, row) in self.rows.iter().enumerate() {
            log::trace!("  row {r} (basis {}): {row:?}", self.basis[r]);
        }
        log::trace!("  obj: {:?}", self.obj);
    }

    fn phase1(&mut self) -> Result<Phase1, LpError> {
        if self.rows.is_empty() {
            return Ok(Phase1::Feasible);
        }
        let mut costs = vec![0.0; self.ncols];
        for c in costs.iter_mut().skip(self.art_start) {
            *c = 1.0;
        }
        self.install_costs(&costs);
        self.iterate(|_| true)?;

        let residual = self.objective_value();
        if residual > self.feas_tol {
            return Ok(Phase1::Infeasible(residual));
        }

        // Drive leftover artificials out of the basis; rows where no real
        // column can pivot are redundant and get dropped.
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= self.art_start {
                let pivot_col =
                    (0..self.art_start).find(|&c| self.rows[r][c].abs() > self.pivot_tol);
                match pivot_col {
                    Some(c) => self.pivot(r, c),
                    None => {
                        self.rows.swap_remove(r);
                        self.basis.swap_remove(r);
                        continue;
                    }
                }
            }
            r += 1;
        }
        // Artificials are no longer basic anywhere; truncate their columns.
        for row in &mut self.rows {
            let rhs = row[self.ncols];
            row.truncate(self.art_start);
            row.push(rhs);
        }
        let rhs = self.obj[self.ncols];
        self.obj.truncate(self.art_start);
        self.obj.push(rhs);
        self.ncols = self.art_start;
        Ok(Phase1::Feasible)
    }

    fn phase2(&mut self, objective: &[f64]) -> Result<(), LpError> {
        let mut costs = vec![0.0; self.ncols];
        costs[..self.nv].copy_from_slice(objective);
        self.install_costs(&costs);
        self.iterate(|_| true)
    }

    fn extract(&self, problem: &LpProblem) -> Vec<f64> {
        let mut x = self.shifts.clone();
        for (r, &b) in self.basis.iter().enumerate() {
            if b < self.nv {
                x[b] += self.rows[r][self.ncols];
            }
        }
        debug_assert_eq!(x.len(), problem.num_vars);
        x
    }
}
