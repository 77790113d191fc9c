//! Shared test oracles, independent of the library's solver internals.
#![allow(dead_code)] // each test target uses a different subset

use batchlearn::lp::{LpProblem, Relation};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Solve a d x d linear system by Gaussian elimination with partial
/// pivoting; `None` when the system is (near-)singular.
pub fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let d = b.len();
    for col in 0..d {
        let (pivot_row, pivot_val) = (col..d)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|(_, x), (_, y)| x.partial_cmp(y).unwrap())?;
        if pivot_val < 1e-9 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in 0..d {
            if r == col {
                continue;
            }
            let factor = a[r][col] / a[col][col];
            if factor != 0.0 {
                let pivot_row = a[col].clone();
                for (c, pv) in pivot_row.iter().enumerate().skip(col) {
                    a[r][c] -= factor * pv;
                }
                b[r] -= factor * b[col];
            }
        }
    }
    Some((0..d).map(|i| b[i] / a[i][i]).collect())
}

/// Every hyperplane that can be active at a vertex: the constraints plus
/// finite variable bounds, as (coefficients, rhs) rows.
fn hyperplanes(problem: &LpProblem) -> Vec<(Vec<f64>, f64)> {
    let d = problem.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = problem
        .constraints()
        .iter()
        .map(|c| (c.coeffs.clone(), c.rhs))
        .collect();
    for (j, b) in problem.bounds().iter().enumerate() {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        rows.push((e.clone(), b.lower));
        if let Some(u) = b.upper {
            rows.push((e, u));
        }
    }
    rows
}

fn combinations(n: usize, d: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(d);
    fn rec(start: usize, n: usize, d: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == d {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, d, cur, out);
            cur.pop();
        }
    }
    rec(0, n, d, &mut cur, &mut out);
    out
}

pub fn point_satisfies(problem: &LpProblem, x: &[f64], tol: f64) -> bool {
    problem.max_violation(x) <= tol
}

/// Brute-force feasibility: enumerate every vertex candidate (each subset of
/// d hyperplanes taken as equalities) and test it against all constraints.
/// With the default nonnegativity bounds the feasible region is pointed, so
/// it is nonempty iff some vertex is feasible.
pub fn oracle_feasible(problem: &LpProblem, tol: f64) -> Option<Vec<f64>> {
    let d = problem.num_vars();
    let rows = hyperplanes(problem);
    for combo in combinations(rows.len(), d) {
        let a: Vec<Vec<f64>> = combo.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if point_satisfies(problem, &x, tol) {
                return Some(x);
            }
        }
    }
    None
}

/// Brute-force optimum: the objective minimum over feasible vertices. Only
/// valid when the feasible region is bounded (give every variable an upper
/// bound when generating minimization instances).
pub fn oracle_minimum(problem: &LpProblem, objective: &[f64], tol: f64) -> Option<f64> {
    let d = problem.num_vars();
    let rows = hyperplanes(problem);
    let mut best: Option<f64> = None;
    for combo in combinations(rows.len(), d) {
        let a: Vec<Vec<f64>> = combo.iter().map(|&i| rows[i].0.clone()).collect();
        let b: Vec<f64> = combo.iter().map(|&i| rows[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if point_satisfies(problem, &x, tol) {
                let value: f64 = objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(value, |b: f64| b.min(value)));
            }
        }
    }
    best
}

/// Random LP on a quarter-integer grid: up to 4 variables, up to 8
/// constraints, default nonnegativity bounds, occasional equalities.
pub fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let nv = rng.random_range(1..=4);
    let nc = rng.random_range(1..=8);
    let mut problem = LpProblem::new(nv);
    for _ in 0..nc {
        let coeffs: Vec<f64> = (0..nv)
            .map(|_| rng.random_range(-6..=6i32) as f64 * 0.5)
            .collect();
        let relation = match rng.random_range(0..10) {
            0 => Relation::Eq,
            1..=5 => Relation::Le,
            _ => Relation::Ge,
        };
        let rhs = rng.random_range(-8..=8i32) as f64 * 0.5;
        problem.add_constraint(coeffs, relation, rhs);
    }
    problem
}
