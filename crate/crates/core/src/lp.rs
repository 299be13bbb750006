//! Two-phase revised primal simplex with a dense basis inverse.
//!
//! Solves `min c'z` subject to `A_ub z <= b_ub`, `A_eq z = b_eq`, fixed
//! values and per-variable lower bounds (zero unless overridden; a lower
//! bound of `-inf` makes the variable free).
//!
//! Pricing is Dantzig's most-negative reduced cost with lowest-index tie
//! breaking; after a run of degenerate pivots the phase switches to Bland's
//! rule for the rest of the phase, which rules out cycling. The ratio test
//! always breaks ties by the lowest basic variable index. Once a basis is
//! optimal its values are recomputed from the original data with a direct
//! solve, and the result is checked against every constraint before being
//! returned.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{solve_linear, DenseMatrix, DenseVector};

/// Entries of the entering column at or below this are not pivot candidates.
pub const PIVOT_CANDIDATE_TOL: f64 = 1e-9;
/// A chosen pivot smaller than this is a numerical breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-11;
/// Reduced costs above `-OPTIMALITY_TOL` count as nonnegative.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Constraint satisfaction tolerance, relative to `1 + |rhs|`.
pub const FEASIBILITY_TOL: f64 = 1e-8;
/// Lower-bound satisfaction tolerance.
pub const BOUND_TOL: f64 = 1e-10;
/// Consecutive degenerate pivots tolerated before switching to Bland's rule.
const DEGENERATE_RUN_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    /// Cost vector, minimized.
    pub objective: DenseVector,
    pub ineq_lhs: DenseMatrix,
    pub ineq_rhs: DenseVector,
    pub eq_lhs: DenseMatrix,
    pub eq_rhs: DenseVector,
    /// `(index, value)` pairs pinned exactly.
    pub fixed: Vec<(usize, f64)>,
    /// Per-variable lower bounds; `None` means all zero.
    pub lower_bounds: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Present when `status` is `Optimal`.
    pub z: Option<DenseVector>,
    /// Present when `status` is `Optimal`.
    pub objective_value: Option<f64>,
    /// Optimal basis in standard-form column indices; a warm-start hint for
    /// a later LP with the same constraint matrix.
    pub basis: Vec<usize>,
}

impl LpSolution {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            z: None,
            objective_value: None,
            basis: Vec::new(),
        }
    }

    fn unbounded() -> Self {
        Self {
            status: LpStatus::Unbounded,
            z: None,
            objective_value: None,
            basis: Vec::new(),
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl LinearProgram {
    /// A program over `objective.len()` nonnegative variables with no constraints.
    pub fn new(objective: DenseVector) -> Self {
        let n = objective.len();
        Self {
            objective,
            ineq_lhs: DenseMatrix::zeros(0, n),
            ineq_rhs: DenseVector::zeros(0),
            eq_lhs: DenseMatrix::zeros(0, n),
            eq_rhs: DenseVector::zeros(0),
            fixed: Vec::new(),
            lower_bounds: None,
        }
    }

    pub fn with_inequalities(mut self, lhs: DenseMatrix, rhs: DenseVector) -> Self {
        self.ineq_lhs = lhs;
        self.ineq_rhs = rhs;
        self
    }

    pub fn with_equalities(mut self, lhs: DenseMatrix, rhs: DenseVector) -> Self {
        self.eq_lhs = lhs;
        self.eq_rhs = rhs;
        self
    }

    pub fn with_fixed(mut self, fixed: Vec<(usize, f64)>) -> Self {
        self.fixed = fixed;
        self
    }

    pub fn with_lower_bounds(mut self, bounds: Vec<f64>) -> Self {
        self.lower_bounds = Some(bounds);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn lower_bound(&self, j: usize) -> f64 {
        self.lower_bounds.as_ref().map_or(0.0, |lb| lb[j])
    }

    /// Checks dimensions, finiteness and the fixed-index list.
    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let mismatch = |msg: String| Err(LpError::DimensionMismatch(msg));
        if self.ineq_lhs.cols() != n || self.eq_lhs.cols() != n {
            return mismatch(format!(
                "constraint matrices have {} / {} columns for {n} variables",
                self.ineq_lhs.cols(),
                self.eq_lhs.cols()
            ));
        }
        if self.ineq_lhs.rows() != self.ineq_rhs.len() {
            return mismatch("inequality rhs length".to_string());
        }
        if self.eq_lhs.rows() != self.eq_rhs.len() {
            return mismatch("equality rhs length".to_string());
        }
        if let Some(lb) = &self.lower_bounds {
            if lb.len() != n {
                return mismatch(format!("{} lower bounds for {n} variables", lb.len()));
            }
            if lb.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
                return mismatch("lower bounds must be finite or -inf".to_string());
            }
        }
        let mut seen = vec![false; n];
        for &(j, v) in &self.fixed {
            if j >= n {
                return mismatch(format!("fixed index {j} out of range"));
            }
            if seen[j] {
                return mismatch(format!("fixed index {j} repeated"));
            }
            if !v.is_finite() {
                return mismatch(format!("fixed value at {j} is not finite"));
            }
            seen[j] = true;
        }
        let finite = self.objective.is_finite()
            && self.ineq_lhs.is_finite()
            && self.ineq_rhs.is_finite()
            && self.eq_lhs.is_finite()
            && self.eq_rhs.is_finite();
        if !finite {
            return mismatch("non-finite coefficient".to_string());
        }
        Ok(())
    }
}

/// How an original variable maps onto standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    Fixed(f64),
    Shifted { col: usize, lower: f64 },
    Free { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pricing {
    Dantzig,
    Bland,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

/// Iterations between rebuilds of the basis inverse from the original columns.
const REINVERT_PERIOD: usize = 250;

/// Revised simplex state: sparse standard-form columns and a dense basis inverse.
struct Revised {
    rows: usize,
    columns: Vec<Vec<(usize, f64)>>,
    b: Vec<f64>,
    /// Row-major `rows x rows` basis inverse.
    binv: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    x_b: Vec<f64>,
    first_artificial: usize,
    iterations: usize,
    since_reinvert: usize,
    max_iterations: usize,
}

impl Revised {
    fn cols(&self) -> usize {
        self.columns.len()
    }

    /// Rebuilds the basis inverse and basic values by Gauss-Jordan elimination.
    fn reinvert(&mut self) -> Result<(), LpError> {
        let m = self.rows;
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for (k, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.columns[j] {
                aug[r * w + k] = v;
            }
        }
        for r in 0..m {
            aug[r * w + m + r] = 1.0;
        }
        for col in 0..m {
            let p = (col..m)
                .max_by(|&a, &b| aug[a * w + col].abs().total_cmp(&aug[b * w + col].abs()))
                .expect("nonempty pivot search");
            let piv = aug[p * w + col];
            if piv.abs() < BREAKDOWN_TOL {
                return Err(LpError::NumericalBreakdown(format!(
                    "singular basis at column {col} (pivot {piv:e})"
                )));
            }
            if p != col {
                for j in 0..w {
                    aug.swap(p * w + j, col * w + j);
                }
            }
            let inv = 1.0 / piv;
            for j in 0..w {
                aug[col * w + j] *= inv;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = aug[r * w + col];
                if f == 0.0 {
                    continue;
                }
                for j in 0..w {
                    let v = aug[col * w + j];
                    if v != 0.0 {
                        aug[r * w + j] -= f * v;
                    }
                }
            }
        }
        for r in 0..m {
            self.binv[r * m..(r + 1) * m].copy_from_slice(&aug[r * w + m..(r + 1) * w]);
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x_b[r] = row.iter().zip(&self.b).map(|(a, b)| a * b).sum();
        }
        self.since_reinvert = 0;
        Ok(())
    }

    /// Installs `hint` as the basis if it is valid and primal feasible;
    /// restores the previous state otherwise.
    fn try_basis(&mut self, hint: &[usize]) -> bool {
        if hint.len() != self.rows {
            return false;
        }
        let mut seen = vec![false; self.cols()];
        for &j in hint {
            if j >= self.first_artificial || seen[j] {
                return false;
            }
            seen[j] = true;
        }
        let saved = (self.basis.clone(), self.binv.clone(), self.x_b.clone());
        self.basis = hint.to_vec();
        let ok = self.reinvert().is_ok() && self.x_b.iter().all(|&v| v >= -PIVOT_CANDIDATE_TOL);
        if ok {
            self.in_basis = seen;
            self.x_b.iter_mut().for_each(|v| *v = v.max(0.0));
        } else {
            (self.basis, self.binv, self.x_b) = saved;
        }
        ok
    }

    /// Simplex multipliers `y = c_B' B^{-1}`.
    fn multipliers(&self, costs: &[f64]) -> Vec<f64> {
        let m = self.rows;
        let mut y = vec![0.0; m];
        for r in 0..m {
            let cb = costs[self.basis[r]];
            if cb == 0.0 {
                continue;
            }
            for (yk, &v) in y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
                *yk += cb * v;
            }
        }
        y
    }

    fn reduced_cost(&self, costs: &[f64], y: &[f64], j: usize) -> f64 {
        costs[j] - self.columns[j].iter().map(|&(r, v)| y[r] * v).sum::<f64>()
    }

    fn choose_entering(&self, costs: &[f64], pricing: Pricing, eligible_end: usize) -> Option<usize> {
        let y = self.multipliers(costs);
        let mut best: Option<(usize, f64)> = None;
        for j in 0..eligible_end {
            if self.in_basis[j] {
                continue;
            }
            let d = self.reduced_cost(costs, &y, j);
            if d >= -OPTIMALITY_TOL {
                continue;
            }
            if pricing == Pricing::Bland {
                return Some(j);
            }
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((j, d));
            }
        }
        best.map(|(j, _)| j)
    }

    /// `B^{-1} a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.rows;
        let mut alpha = vec![0.0; m];
        for &(k, v) in &self.columns[j] {
            for (r, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[r * m + k] * v;
            }
        }
        alpha
    }

    /// Minimum-ratio row; ties go to the lowest basic variable index.
    fn choose_leaving(&self, alpha: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (r, &a) in alpha.iter().enumerate() {
            if a <= PIVOT_CANDIDATE_TOL {
                continue;
            }
            let ratio = self.x_b[r].max(0.0) / a;
            best = match best {
                None => Some((r, ratio)),
                Some((br, bratio)) => {
                    let tie = (ratio - bratio).abs() <= 1e-12 * (1.0 + bratio.abs());
                    if (tie && self.basis[r] < self.basis[br]) || (!tie && ratio < bratio) {
                        Some((r, ratio))
                    } else {
                        Some((br, bratio))
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, pr: usize, pc: usize, alpha: &[f64]) -> Result<(), LpError> {
        let m = self.rows;
        let piv = alpha[pr];
        if piv.abs() < BREAKDOWN_TOL {
            return Err(LpError::NumericalBreakdown(format!(
                "pivot magnitude {piv:e} at row {pr}, column {pc}"
            )));
        }
        let inv = 1.0 / piv;
        let theta = self.x_b[pr] * inv;
        for v in &mut self.binv[pr * m..(pr + 1) * m] {
            *v *= inv;
        }
        let (before, rest) = self.binv.split_at_mut(pr * m);
        let (prow, after) = rest.split_at_mut(m);
        for (r, &a) in alpha.iter().enumerate() {
            if r == pr || a == 0.0 {
                continue;
            }
            let row = if r < pr {
                &mut before[r * m..(r + 1) * m]
            } else {
                &mut after[(r - pr - 1) * m..(r - pr) * m]
            };
            for (x, &p) in row.iter_mut().zip(prow.iter()) {
                if p != 0.0 {
                    *x -= a * p;
                }
            }
            self.x_b[r] -= a * theta;
        }
        self.x_b[pr] = theta;
        self.in_basis[self.basis[pr]] = false;
        self.in_basis[pc] = true;
        self.basis[pr] = pc;
        self.iterations += 1;
        self.since_reinvert += 1;
        if self.since_reinvert >= REINVERT_PERIOD {
            self.reinvert()?;
        }
        Ok(())
    }

    fn run_phase(&mut self, costs: &[f64], eligible_end: usize) -> Result<PhaseOutcome, LpError> {
        let mut pricing = Pricing::Dantzig;
        let mut degenerate_run = 0;
        loop {
            let Some(pc) = self.choose_entering(costs, pricing, eligible_end) else {
                return Ok(PhaseOutcome::Optimal);
            };
            let alpha = self.ftran(pc);
            let Some((pr, ratio)) = self.choose_leaving(&alpha) else {
                return Ok(PhaseOutcome::Unbounded);
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_RUN_LIMIT {
                    pricing = Pricing::Bland;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(pr, pc, &alpha)?;
            if self.iterations > self.max_iterations {
                return Err(LpError::NumericalBreakdown(format!(
                    "iteration limit {} reached",
                    self.max_iterations
                )));
            }
        }
    }

    /// Swaps basic artificials for structural or slack columns where the
    /// corresponding row of `B^{-1} A` allows it.
    fn drive_out_artificials(&mut self) -> Result<(), LpError> {
        let m = self.rows;
        for r in 0..m {
            if self.basis[r] < self.first_artificial {
                continue;
            }
            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.first_artificial {
                if self.in_basis[j] {
                    continue;
                }
                let v: f64 = self.columns[j].iter().map(|&(k, a)| rho[k] * a).sum();
                if v.abs() > PIVOT_CANDIDATE_TOL && best.is_none_or(|(_, bv)| v.abs() > bv) {
                    best = Some((j, v.abs()));
                }
            }
            if let Some((j, _)) = best {
                let alpha = self.ftran(j);
                self.pivot(r, j, &alpha)?;
            }
        }
        Ok(())
    }
}

/// Solves `lp` to optimality or reports infeasibility / unboundedness.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_warm(lp, None)
}

/// Like [`solve_lp`], but first tries `hint` (the `basis` of an earlier
/// solution) as the starting basis. The hint is used only when it is a
/// nonsingular, primal feasible basis without artificial columns; otherwise
/// the solve starts cold.
pub fn solve_lp_warm(lp: &LinearProgram, hint: Option<&[usize]>) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // Variable substitution.
    let mut maps = Vec::with_capacity(n);
    let mut fixed_val = vec![None; n];
    for &(j, v) in &lp.fixed {
        fixed_val[j] = Some(v);
    }
    let mut ncols = 0;
    for (j, fixed) in fixed_val.iter().enumerate() {
        let lower = lp.lower_bound(j);
        let map = match fixed {
            Some(v) => {
                if *v < lower - BOUND_TOL {
                    return Ok(LpSolution::infeasible());
                }
                VarMap::Fixed(*v)
            }
            None if lower == f64::NEG_INFINITY => {
                ncols += 2;
                VarMap::Free {
                    pos: ncols - 2,
                    neg: ncols - 1,
                }
            }
            None => {
                ncols += 1;
                VarMap::Shifted { col: ncols - 1, lower }
            }
        };
        maps.push(map);
    }
    let structural = ncols;

    let m_ub = lp.ineq_lhs.rows();
    let m_eq = lp.eq_lhs.rows();
    let rows = m_ub + m_eq;

    // Standard-form rows as sparse entries, with the rhs adjusted for
    // fixed and shifted variables.
    let mut std_rhs = Vec::with_capacity(rows);
    let mut std_entries: Vec<Vec<(usize, f64)>> = Vec::with_capacity(rows);
    let expand = |src: &[f64], rhs: f64| {
        let mut entries = Vec::new();
        let mut b = rhs;
        for (j, &a) in src.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Fixed(v) => b -= a * v,
                VarMap::Shifted { col, lower } => {
                    entries.push((col, a));
                    b -= a * lower;
                }
                VarMap::Free { pos, neg } => {
                    entries.push((pos, a));
                    entries.push((neg, -a));
                }
            }
        }
        (entries, b)
    };
    for i in 0..m_ub {
        let (e, b) = expand(lp.ineq_lhs.row(i), lp.ineq_rhs[i]);
        std_entries.push(e);
        std_rhs.push(b);
    }
    for i in 0..m_eq {
        let (e, b) = expand(lp.eq_lhs.row(i), lp.eq_rhs[i]);
        std_entries.push(e);
        std_rhs.push(b);
    }

    // Slacks for inequality rows; artificials for equalities and for
    // inequalities whose rhs had to be negated.
    let needs_artificial: Vec<bool> = (0..rows).map(|r| r >= m_ub || std_rhs[r] < 0.0).collect();
    let n_art = needs_artificial.iter().filter(|&&a| a).count();
    let first_slack = structural;
    let first_artificial = structural + m_ub;
    let cols = first_artificial + n_art;

    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
    let mut b = vec![0.0; rows];
    let mut basis = vec![0; rows];
    let mut art = first_artificial;
    for r in 0..rows {
        let sign = if std_rhs[r] < 0.0 { -1.0 } else { 1.0 };
        for &(j, a) in &std_entries[r] {
            columns[j].push((r, sign * a));
        }
        if r < m_ub {
            columns[first_slack + r].push((r, sign));
        }
        b[r] = sign * std_rhs[r];
        if needs_artificial[r] {
            columns[art].push((r, 1.0));
            basis[r] = art;
            art += 1;
        } else {
            basis[r] = first_slack + r;
        }
    }
    let mut in_basis = vec![false; cols];
    for &j in &basis {
        in_basis[j] = true;
    }

    let mut binv = vec![0.0; rows * rows];
    for r in 0..rows {
        binv[r * rows + r] = 1.0;
    }
    let mut solver = Revised {
        rows,
        columns,
        x_b: b.clone(),
        b,
        binv,
        basis,
        in_basis,
        first_artificial,
        iterations: 0,
        since_reinvert: 0,
        max_iterations: 50_000 + 50 * (rows + cols),
    };

    let b_scale = 1.0 + std_rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let warm = hint.is_some_and(|h| solver.try_basis(h));
    if n_art > 0 && !warm {
        let mut phase1 = vec![0.0; cols];
        phase1[first_artificial..].iter_mut().for_each(|c| *c = 1.0);
        solver.run_phase(&phase1, cols)?;
        solver.reinvert()?;
        let infeasibility: f64 = (0..rows)
            .filter(|&r| solver.basis[r] >= first_artificial)
            .map(|r| solver.x_b[r])
            .sum();
        if infeasibility > FEASIBILITY_TOL * b_scale {
            return Ok(LpSolution::infeasible());
        }
        solver.drive_out_artificials()?;
    }

    // Phase 2 costs in standard-form columns.
    let mut costs = vec![0.0; cols];
    for (j, map) in maps.iter().enumerate() {
        let c = lp.objective[j];
        match *map {
            VarMap::Fixed(_) => {}
            VarMap::Shifted { col, .. } => costs[col] = c,
            VarMap::Free { pos, neg } => {
                costs[pos] = c;
                costs[neg] = -c;
            }
        }
    }
    if let PhaseOutcome::Unbounded = solver.run_phase(&costs, first_artificial)? {
        return Ok(LpSolution::unbounded());
    }

    // Basic values from the current inverse, then a direct solve on the
    // original basis columns.
    let mut values = vec![0.0; solver.cols()];
    if rows > 0 {
        solver.reinvert()?;
        for r in 0..rows {
            values[solver.basis[r]] = solver.x_b[r];
        }
        let mut basis_matrix = DenseMatrix::zeros(rows, rows);
        for (k, &j) in solver.basis.iter().enumerate() {
            for &(r, v) in &solver.columns[j] {
                basis_matrix[(r, k)] = v;
            }
        }
        let rhs = DenseVector::from(solver.b.clone());
        if let Ok(refined) = solve_linear(&basis_matrix, &rhs) {
            if refined.iter().all(|v| *v >= -1e-9) {
                for k in 0..rows {
                    values[solver.basis[k]] = refined[k];
                }
            }
        }
    }
    for v in values.iter_mut() {
        if *v < 0.0 && *v > -1e-9 {
            *v = 0.0;
        }
    }

    let z = DenseVector::from_fn(n, |j| match maps[j] {
        VarMap::Fixed(v) => v,
        VarMap::Shifted { col, lower } => lower + values[col],
        VarMap::Free { pos, neg } => values[pos] - values[neg],
    });
    check_feasibility(lp, &z)?;
    let objective_value = lp.objective.dot(&z);
    Ok(LpSolution {
        status: LpStatus::Optimal,
        z: Some(z),
        objective_value: Some(objective_value),
        basis: solver.basis,
    })
}

/// Largest violation of any constraint of `lp` at `z`, split by kind:
/// `(inequality, equality, bound)`.
pub fn constraint_violations(lp: &LinearProgram, z: &DenseVector) -> (f64, f64, f64) {
    let ub = lp.ineq_lhs.mul_vec(z);
    let ineq = (0..ub.len())
        .map(|i| (ub[i] - lp.ineq_rhs[i]).max(0.0) / (1.0 + lp.ineq_rhs[i].abs()))
        .fold(0.0, f64::max);
    let eqv = lp.eq_lhs.mul_vec(z);
    let eq = (0..eqv.len())
        .map(|i| (eqv[i] - lp.eq_rhs[i]).abs() / (1.0 + lp.eq_rhs[i].abs()))
        .fold(0.0, f64::max);
    let bound = (0..z.len())
        .map(|j| (lp.lower_bound(j) - z[j]).max(0.0))
        .fold(0.0, f64::max);
    (ineq, eq, bound)
}

fn check_feasibility(lp: &LinearProgram, z: &DenseVector) -> Result<(), LpError> {
    if !z.is_finite() {
        return Err(LpError::NumericalBreakdown("non-finite solution".to_string()));
    }
    let (ineq, eq, bound) = constraint_violations(lp, z);
    if ineq > FEASIBILITY_TOL || eq > FEASIBILITY_TOL || bound > BOUND_TOL {
        return Err(LpError::NumericalBreakdown(format!(
            "solution violates constraints (ineq {ineq:e}, eq {eq:e}, bound {bound:e})"
        )));
    }
    if lp.fixed.iter().any(|&(j, v)| z[j] != v) {
        return Err(LpError::NumericalBreakdown("fixed value drifted".to_string()));
    }
    Ok(())
}
