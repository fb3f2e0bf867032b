//! Exact solver for small dense linear programs: maximize cᵀx subject to
//! Ax ≤ b and box bounds.
//!
//! Two-phase primal simplex on a dense tableau with Bland's rule throughout,
//! so runs terminate and tie-breaking is deterministic (lowest index). The
//! contract is exactness to 1e-8 on the problem sizes seen per slot, not
//! large-scale performance.

#![allow(clippy::needless_range_loop)] // dense index math reads clearer

use std::fmt::Write as _;

use crate::num::Real;

#[derive(Debug, Clone)]
pub struct LpProblem<T: Real> {
    /// Objective coefficients; the solver maximizes cᵀx.
    pub objective: Vec<T>,
    /// Inequality rows of Ax ≤ b.
    pub rows: Vec<Vec<T>>,
    pub rhs: Vec<T>,
    /// Per-variable [lo, hi]; hi may be +∞, lo must be finite.
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct LpSolution<T: Real> {
    pub status: LpStatus,
    pub x: Vec<T>,
    pub objective: T,
}

impl<T: Real> LpProblem<T> {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    /// Plain-text tableau dump, one constraint per line, for debugging.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "maximize {:?}", self.objective);
        for (row, b) in self.rows.iter().zip(&self.rhs) {
            let _ = writeln!(s, "  {row:?} <= {b}");
        }
        for j in 0..self.n_vars() {
            let _ = writeln!(s, "  {} <= x{} <= {}", self.lower[j], j, self.upper[j]);
        }
        s
    }
}

const TOL: f64 = 1e-9;

/// Dense two-phase simplex. Infeasible/unbounded are reported via status.
pub fn solve<T: Real>(problem: &LpProblem<T>) -> LpSolution<T> {
    let n = problem.n_vars();
    let tol = T::of(TOL);
    for j in 0..n {
        debug_assert!(problem.lower[j].is_finite());
        if problem.lower[j] > problem.upper[j] {
            return infeasible(n);
        }
    }

    // shift to y = x - lo >= 0 and add finite upper bounds as rows
    let mut rows: Vec<Vec<T>> = Vec::new();
    let mut rhs: Vec<T> = Vec::new();
    for (row, &b) in problem.rows.iter().zip(&problem.rhs) {
        let shift: T = row.iter().zip(&problem.lower).map(|(&a, &l)| a * l).sum();
        rows.push(row.clone());
        rhs.push(b - shift);
    }
    for j in 0..n {
        let u = problem.upper[j] - problem.lower[j];
        if u.is_finite() {
            let mut row = vec![T::zero(); n];
            row[j] = T::one();
            rows.push(row);
            rhs.push(u);
        }
    }

    let m = rows.len();
    // columns: y (n) | slacks (m) | artificials (added per negative-rhs row)
    let mut artificial_rows: Vec<usize> = Vec::new();
    for i in 0..m {
        if rhs[i] < -tol {
            artificial_rows.push(i);
        }
    }
    let na = artificial_rows.len();
    let ncols = n + m + na;
    let mut tab = vec![vec![T::zero(); ncols + 1]; m];
    let mut basis = vec![0usize; m];
    {
        let mut a_idx = 0;
        for i in 0..m {
            let neg = rhs[i] < -tol;
            let sign = if neg { -T::one() } else { T::one() };
            for j in 0..n {
                tab[i][j] = sign * rows[i][j];
            }
            tab[i][n + i] = sign; // slack
            tab[i][ncols] = sign * rhs[i];
            if neg {
                tab[i][n + m + a_idx] = T::one();
                basis[i] = n + m + a_idx;
                a_idx += 1;
            } else {
                basis[i] = n + i;
            }
        }
    }

    let banned_from = n + m; // artificial columns, never re-entering in phase 2

    // phase 1: maximize -(sum of artificials)
    if na > 0 {
        let mut obj = vec![T::zero(); ncols + 1];
        for j in banned_from..ncols {
            obj[j] = -T::one();
        }
        // canonicalize: add artificial basis rows into the objective
        for i in 0..m {
            if basis[i] >= banned_from {
                for j in 0..=ncols {
                    let v = tab[i][j];
                    obj[j] += v;
                }
            }
        }
        if !pivot_loop(&mut tab, &mut obj, &mut basis, ncols, ncols, tol) {
            // Phase 1 of a bounded-feasible-region problem cannot be unbounded.
            return infeasible(n);
        }
        // the rhs cell carries −z, so a positive residual means artificials > 0
        if obj[ncols] > tol {
            return infeasible(n);
        }
        // drive remaining artificials out of the basis where possible
        for i in 0..m {
            if basis[i] >= banned_from {
                if let Some(j) = (0..banned_from).find(|&j| tab[i][j].abs() > tol) {
                    pivot(&mut tab, &mut None, i, j, ncols);
                    basis[i] = j;
                }
                // else: redundant row, harmless to leave with a zero artificial
            }
        }
    }

    // phase 2
    let mut obj = vec![T::zero(); ncols + 1];
    obj[..n].copy_from_slice(&problem.objective);
    for i in 0..m {
        if basis[i] < n && obj[basis[i]] != T::zero() {
            let c = obj[basis[i]];
            for j in 0..=ncols {
                let v = tab[i][j];
                obj[j] -= c * v;
            }
        }
    }
    if !pivot_loop(&mut tab, &mut obj, &mut basis, banned_from, ncols, tol) {
        return LpSolution {
            status: LpStatus::Unbounded,
            x: vec![T::zero(); n],
            objective: T::infinity(),
        };
    }

    let mut x = problem.lower.clone();
    for i in 0..m {
        if basis[i] < n {
            x[basis[i]] += tab[i][ncols];
        }
    }
    let objective = x
        .iter()
        .zip(&problem.objective)
        .map(|(&xi, &ci)| xi * ci)
        .sum();
    LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
    }
}

fn infeasible<T: Real>(n: usize) -> LpSolution<T> {
    LpSolution {
        status: LpStatus::Infeasible,
        x: vec![T::zero(); n],
        objective: T::nan(),
    }
}

/// Bland-rule pivoting until optimal; returns false on unboundedness.
fn pivot_loop<T: Real>(
    tab: &mut [Vec<T>],
    obj: &mut Vec<T>,
    basis: &mut [usize],
    enter_limit: usize,
    ncols: usize,
    tol: T,
) -> bool {
    loop {
        // Bland: lowest-index column with positive reduced cost
        let Some(col) = (0..enter_limit).find(|&j| obj[j] > tol) else {
            return true;
        };
        let mut leave: Option<usize> = None;
        let mut best = T::infinity();
        for (i, row) in tab.iter().enumerate() {
            if row[col] > tol {
                let ratio = row[ncols] / row[col];
                let replace = match leave {
                    None => true,
                    Some(cur) => {
                        ratio < best - tol || (ratio < best + tol && basis[i] < basis[cur])
                    }
                };
                if replace {
                    leave = Some(i);
                    best = ratio;
                }
            }
        }
        let Some(row) = leave else {
            return false;
        };
        pivot(tab, &mut Some(obj), row, col, ncols);
        basis[row] = col;
    }
}

fn pivot<T: Real>(
    tab: &mut [Vec<T>],
    obj: &mut Option<&mut Vec<T>>,
    row: usize,
    col: usize,
    ncols: usize,
) {
    let d = tab[row][col];
    for j in 0..=ncols {
        tab[row][j] /= d;
    }
    for i in 0..tab.len() {
        if i == row {
            continue;
        }
        let f = tab[i][col];
        if f == T::zero() {
            continue;
        }
        for j in 0..=ncols {
            let v = tab[row][j] * f;
            tab[i][j] -= v;
        }
    }
    if let Some(obj) = obj {
        let f = obj[col];
        if f != T::zero() {
            for j in 0..=ncols {
                let v = tab[row][j] * f;
                obj[j] -= v;
            }
        }
    }
}

/// Primal feasibility check at the stated tolerances.
pub fn is_feasible<T: Real>(problem: &LpProblem<T>, x: &[T], tol: T) -> bool {
    for (row, &b) in problem.rows.iter().zip(&problem.rhs) {
        let lhs: T = row.iter().zip(x).map(|(&a, &v)| a * v).sum();
        if lhs > b + tol {
            return false;
        }
    }
    x.iter()
        .enumerate()
        .all(|(j, &v)| v >= problem.lower[j] - tol && v <= problem.upper[j] + tol)
}
