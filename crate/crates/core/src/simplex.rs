//! Dense revised simplex for the restricted master problem.
//!
//! Solves `min c'x  s.t.  A x = b (or >= b), x >= 0` with an explicit basis
//! inverse. The first solve runs a Phase 1 over artificial variables; later
//! solves after [`Solver::add_column`] restart Phase 2 from the previous
//! optimal basis. Dantzig pricing is used until a long run of degenerate
//! pivots is detected, then Bland's rule takes over until progress resumes.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("column has {got} rows, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("restricted master has no columns")]
    NoColumns,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("basis matrix became singular")]
    Singular,
    #[error("warm start requires a previous optimal solve")]
    NoBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    /// `A x = b`
    Equal,
    /// `A x >= b`, realized with surplus columns.
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    /// One value per structural column, in insertion order.
    pub lambda: Vec<T>,
    /// One dual value per constraint row.
    pub duals: Vec<T>,
    pub objective: T,
    pub status: LpStatus,
}

#[derive(Debug, Clone)]
pub struct SimplexOptions {
    pub sense: Sense,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    /// Pivots between refactorizations of the basis inverse.
    pub refactor_every: usize,
    pub max_iterations: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { sense: Sense::Equal, bland_after: 1000, refactor_every: 50, max_iterations: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Var {
    Column(usize),
    Surplus(usize),
    Artificial(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

/// A stateful solver context; clone it to branch off tentative solves.
#[derive(Debug, Clone)]
pub struct Solver<T> {
    opts: SimplexOptions,
    rows: usize,
    /// Right-hand side after sign normalization (always >= 0).
    rhs: Vec<T>,
    /// +1 or -1 per row; rows with negative rhs are negated internally.
    row_sign: Vec<T>,
    columns: Vec<Vec<T>>,
    costs: Vec<T>,
    basis: Vec<Var>,
    /// Row-major `rows x rows`.
    binv: Vec<T>,
    x_basic: Vec<T>,
    has_basis: bool,
    pivots_since_refactor: usize,
    pub total_pivots: usize,
}

impl<T: Scalar> Solver<T> {
    pub fn new(rhs: &[T], opts: SimplexOptions) -> Self {
        let rows = rhs.len();
        let row_sign: Vec<T> = rhs
            .iter()
            .map(|&b| if b < T::zero() { -T::one() } else { T::one() })
            .collect();
        let rhs = rhs.iter().zip(&row_sign).map(|(&b, &s)| b * s).collect();
        Self {
            opts,
            rows,
            rhs,
            row_sign,
            columns: Vec::new(),
            costs: Vec::new(),
            basis: Vec::new(),
            binv: Vec::new(),
            x_basic: Vec::new(),
            has_basis: false,
            pivots_since_refactor: 0,
            total_pivots: 0,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows
    }

    pub fn num_columns(&self) -> usize {
        self.columns.len()
    }

    /// Appends a structural column; the current basis stays valid.
    pub fn add_column(&mut self, coeffs: &[T], cost: T) -> Result<usize, LpError> {
        if coeffs.len() != self.rows {
            return Err(LpError::DimensionMismatch { expected: self.rows, got: coeffs.len() });
        }
        let col = coeffs.iter().zip(&self.row_sign).map(|(&a, &s)| a * s).collect();
        self.columns.push(col);
        self.costs.push(cost);
        Ok(self.columns.len() - 1)
    }

    /// Adds a column and re-optimizes from the current basis.
    pub fn warm_solve(&mut self, coeffs: &[T], cost: T) -> Result<LpSolution<T>, LpError> {
        if !self.has_basis {
            return Err(LpError::NoBasis);
        }
        self.add_column(coeffs, cost)?;
        self.solve()
    }

    /// Optimizes, warm-starting from the last basis when one exists.
    pub fn solve(&mut self) -> Result<LpSolution<T>, LpError> {
        if self.columns.is_empty() {
            return Err(LpError::NoColumns);
        }
        if !self.has_basis {
            self.start_artificial_basis();
            self.iterate(Phase::One)?;
            let infeas: T = self
                .basis
                .iter()
                .zip(&self.x_basic)
                .filter(|(v, _)| matches!(v, Var::Artificial(_)))
                .map(|(_, &x)| x)
                .sum();
            let scale = self.rhs.iter().fold(T::one(), |m, &b| m.max(b));
            if infeas > T::lit(T::FEAS_TOL) * scale {
                return Ok(self.infeasible());
            }
            self.drive_out_artificials();
            self.has_basis = true;
        }
        self.iterate(Phase::Two)?;
        Ok(self.solution())
    }

    fn infeasible(&self) -> LpSolution<T> {
        LpSolution {
            lambda: vec![T::zero(); self.columns.len()],
            duals: vec![T::zero(); self.rows],
            objective: T::nan(),
            status: LpStatus::Infeasible,
        }
    }

    fn start_artificial_basis(&mut self) {
        let m = self.rows;
        self.basis = (0..m).map(Var::Artificial).collect();
        self.binv = vec![T::zero(); m * m];
        for i in 0..m {
            self.binv[i * m + i] = T::one();
        }
        self.x_basic = self.rhs.clone();
        self.pivots_since_refactor = 0;
    }

    fn num_surplus(&self) -> usize {
        match self.opts.sense {
            Sense::Equal => 0,
            Sense::AtLeast => self.rows,
        }
    }

    fn column_entry(&self, var: Var, row: usize) -> T {
        match var {
            Var::Column(j) => self.columns[j][row],
            Var::Surplus(i) => {
                if i == row {
                    -self.row_sign[i]
                } else {
                    T::zero()
                }
            }
            Var::Artificial(i) => {
                if i == row {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    fn dense_column(&self, var: Var) -> Vec<T> {
        (0..self.rows).map(|r| self.column_entry(var, r)).collect()
    }

    fn cost(&self, var: Var, phase: Phase) -> T {
        match (phase, var) {
            (Phase::One, Var::Artificial(_)) => T::one(),
            (Phase::One, _) => T::zero(),
            (Phase::Two, Var::Column(j)) => self.costs[j],
            (Phase::Two, _) => T::zero(),
        }
    }

    /// `d = B^-1 a` for a non-basic variable.
    fn ftran(&self, var: Var) -> Vec<T> {
        let m = self.rows;
        let a = self.dense_column(var);
        (0..m)
            .map(|i| {
                let row = &self.binv[i * m..(i + 1) * m];
                row.iter().zip(&a).fold(T::zero(), |acc, (&b, &x)| acc + b * x)
            })
            .collect()
    }

    /// Simplex multipliers `c_B' B^-1` in the internal row orientation.
    fn multipliers(&self, phase: Phase) -> Vec<T> {
        let m = self.rows;
        let mut pi = vec![T::zero(); m];
        for (i, &v) in self.basis.iter().enumerate() {
            let c = self.cost(v, phase);
            if c == T::zero() {
                continue;
            }
            let row = &self.binv[i * m..(i + 1) * m];
            for (p, &b) in pi.iter_mut().zip(row) {
                *p += c * b;
            }
        }
        pi
    }

    fn reduced_cost(&self, var: Var, pi: &[T], phase: Phase) -> T {
        let dot = match var {
            Var::Column(j) => self.columns[j].iter().zip(pi).fold(T::zero(), |acc, (&a, &p)| acc + a * p),
            Var::Surplus(i) => -self.row_sign[i] * pi[i],
            Var::Artificial(i) => pi[i],
        };
        self.cost(var, phase) - dot
    }

    fn candidates(&self) -> impl Iterator<Item = Var> + '_ {
        (0..self.columns.len())
            .map(Var::Column)
            .chain((0..self.num_surplus()).map(Var::Surplus))
    }

    fn choose_entering(&self, pi: &[T], phase: Phase, bland: bool) -> Option<Var> {
        let tol = -T::lit(T::OPT_TOL);
        let mut in_basis = vec![false; self.columns.len() + self.num_surplus()];
        for v in &self.basis {
            match *v {
                Var::Column(j) => in_basis[j] = true,
                Var::Surplus(i) => in_basis[self.columns.len() + i] = true,
                Var::Artificial(_) => {}
            }
        }
        let mut best: Option<(Var, T)> = None;
        for (k, var) in self.candidates().enumerate() {
            if in_basis[k] {
                continue;
            }
            let rc = self.reduced_cost(var, pi, phase);
            if rc < tol {
                if bland {
                    return Some(var);
                }
                if best.map_or(true, |(_, b)| rc < b) {
                    best = Some((var, rc));
                }
            }
        }
        best.map(|(v, _)| v)
    }

    /// Ratio test; returns the leaving row and the step length.
    fn choose_leaving(&self, d: &[T], phase: Phase, bland: bool) -> Option<(usize, T)> {
        let piv = T::lit(T::PIVOT_TOL);
        if phase == Phase::Two {
            // A zero-level artificial left over from Phase 1 must not move off zero.
            for (i, &v) in self.basis.iter().enumerate() {
                if matches!(v, Var::Artificial(_)) && d[i].abs() > piv {
                    return Some((i, T::zero()));
                }
            }
        }
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.rows {
            if d[i] <= piv {
                continue;
            }
            let ratio = self.x_basic[i].max(T::zero()) / d[i];
            best = match best {
                None => Some((i, ratio)),
                Some((r, br)) => {
                    let eps = T::lit(T::FEAS_TOL) * T::lit(1e-3);
                    if ratio < br - eps {
                        Some((i, ratio))
                    } else if ratio <= br + eps {
                        let better = if bland {
                            self.basis[i] < self.basis[r]
                        } else {
                            d[i] > d[r]
                        };
                        if better {
                            Some((i, ratio.min(br)))
                        } else {
                            Some((r, br.min(ratio)))
                        }
                    } else {
                        Some((r, br))
                    }
                }
            };
        }
        best
    }

    fn pivot(&mut self, row: usize, entering: Var, d: &[T], step: T) -> Result<(), LpError> {
        let m = self.rows;
        for i in 0..m {
            if i != row {
                self.x_basic[i] -= step * d[i];
            }
        }
        self.x_basic[row] = step;
        let dr = d[row];
        for j in 0..m {
            self.binv[row * m + j] /= dr;
        }
        let pivot_row: Vec<T> = self.binv[row * m..(row + 1) * m].to_vec();
        for i in 0..m {
            if i == row || d[i] == T::zero() {
                continue;
            }
            let f = d[i];
            for (b, &p) in self.binv[i * m..(i + 1) * m].iter_mut().zip(&pivot_row) {
                *b -= f * p;
            }
        }
        self.basis[row] = entering;
        self.total_pivots += 1;
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Recomputes `B^-1` by Gauss-Jordan elimination with partial pivoting.
    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.rows;
        let mut a = vec![T::zero(); m * m];
        for (j, &v) in self.basis.iter().enumerate() {
            for i in 0..m {
                a[i * m + j] = self.column_entry(v, i);
            }
        }
        let mut inv = vec![T::zero(); m * m];
        for i in 0..m {
            inv[i * m + i] = T::one();
        }
        for col in 0..m {
            let mut p = col;
            for r in col + 1..m {
                if a[r * m + col].abs() > a[p * m + col].abs() {
                    p = r;
                }
            }
            if a[p * m + col].abs() <= T::lit(T::PIVOT_TOL) {
                return Err(LpError::Singular);
            }
            if p != col {
                for j in 0..m {
                    a.swap(p * m + j, col * m + j);
                    inv.swap(p * m + j, col * m + j);
                }
            }
            let diag = a[col * m + col];
            for j in 0..m {
                a[col * m + j] /= diag;
                inv[col * m + j] /= diag;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f == T::zero() {
                    continue;
                }
                for j in 0..m {
                    let (av, iv) = (a[col * m + j], inv[col * m + j]);
                    a[r * m + j] -= f * av;
                    inv[r * m + j] -= f * iv;
                }
            }
        }
        self.binv = inv;
        self.x_basic = (0..m)
            .map(|i| {
                let row = &self.binv[i * m..(i + 1) * m];
                row.iter().zip(&self.rhs).fold(T::zero(), |acc, (&b, &r)| acc + b * r)
            })
            .collect();
        let tol = T::lit(T::FEAS_TOL);
        for x in &mut self.x_basic {
            if *x < T::zero() && *x > -tol {
                *x = T::zero();
            }
        }
        self.pivots_since_refactor = 0;
        Ok(())
    }

    fn iterate(&mut self, phase: Phase) -> Result<(), LpError> {
        let mut degenerate_run = 0usize;
        let mut iterations = 0usize;
        let mut verified = false;
        loop {
            if iterations >= self.opts.max_iterations {
                return Err(LpError::IterationLimit(iterations));
            }
            let bland = degenerate_run >= self.opts.bland_after;
            let pi = self.multipliers(phase);
            let Some(entering) = self.choose_entering(&pi, phase, bland) else {
                if verified || self.pivots_since_refactor == 0 {
                    return Ok(());
                }
                // Confirm optimality on a freshly factorized basis.
                self.refactor()?;
                verified = true;
                continue;
            };
            verified = false;
            let d = self.ftran(entering);
            let Some((row, step)) = self.choose_leaving(&d, phase, bland) else {
                return Err(LpError::Unbounded);
            };
            if step <= T::lit(T::FEAS_TOL) * T::lit(1e-3) {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(row, entering, &d, step)?;
            iterations += 1;
        }
    }

    /// Pivots zero-level artificials out of the basis where a structural column allows it.
    fn drive_out_artificials(&mut self) {
        let m = self.rows;
        for row in 0..m {
            if !matches!(self.basis[row], Var::Artificial(_)) {
                continue;
            }
            let binv_row: Vec<T> = self.binv[row * m..(row + 1) * m].to_vec();
            let replacement = self.candidates().find(|&v| {
                !self.basis.contains(&v) && {
                    let a = self.dense_column(v);
                    let alpha = binv_row.iter().zip(&a).fold(T::zero(), |acc, (&b, &x)| acc + b * x);
                    alpha.abs() > T::lit(1e-7)
                }
            });
            if let Some(var) = replacement {
                let d = self.ftran(var);
                let step = self.x_basic[row] / d[row];
                // A failed refactorization leaves the previous inverse in place; Phase 2 repairs it.
                let _ = self.pivot(row, var, &d, step);
            }
        }
    }

    fn solution(&self) -> LpSolution<T> {
        let mut lambda = vec![T::zero(); self.columns.len()];
        for (i, &v) in self.basis.iter().enumerate() {
            if let Var::Column(j) = v {
                lambda[j] = self.x_basic[i].max(T::zero());
            }
        }
        let objective = lambda.iter().zip(&self.costs).fold(T::zero(), |acc, (&x, &c)| acc + x * c);
        let pi = self.multipliers(Phase::Two);
        let duals = pi.iter().zip(&self.row_sign).map(|(&p, &s)| p * s).collect();
        LpSolution { lambda, duals, objective, status: LpStatus::Optimal }
    }
}

/// Cold-solves `min sum(lambda)  s.t.  sum_p x_p lambda_p = d, lambda >= 0`.
pub fn solve_rmp<T: Scalar>(columns: &[Vec<T>], demands: &[T]) -> Result<LpSolution<T>, LpError> {
    solve_rmp_with(columns, demands, SimplexOptions::default())
}

pub fn solve_rmp_with<T: Scalar>(
    columns: &[Vec<T>],
    demands: &[T],
    opts: SimplexOptions,
) -> Result<LpSolution<T>, LpError> {
    if columns.is_empty() {
        return Err(LpError::NoColumns);
    }
    let mut solver = Solver::new(demands, opts);
    for c in columns {
        solver.add_column(c, T::one())?;
    }
    solver.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(v: &[&[f64]]) -> Vec<Vec<f64>> {
        v.iter().map(|c| c.to_vec()).collect()
    }

    /// Enumerates all bases of a small equality LP and returns the best feasible objective.
    fn enumerate_bfs(columns: &[Vec<f64>], b: &[f64]) -> Option<f64> {
        assert_eq!(b.len(), 2, "oracle handles two rows");
        let mut best: Option<f64> = None;
        let n = columns.len();
        let mut consider = |obj: f64| best = Some(best.map_or(obj, |b: f64| b.min(obj)));
        for i in 0..n {
            // Single-column bases with the other row satisfied trivially.
            let c = &columns[i];
            for r in 0..2 {
                if c[r] != 0.0 {
                    let x = b[r] / c[r];
                    if x >= 0.0 && (c[1 - r] * x - b[1 - r]).abs() < 1e-12 {
                        consider(x);
                    }
                }
            }
            for j in i + 1..n {
                let (a, bb) = (&columns[i], &columns[j]);
                let det = a[0] * bb[1] - a[1] * bb[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let xi = (b[0] * bb[1] - b[1] * bb[0]) / det;
                let xj = (a[0] * b[1] - a[1] * b[0]) / det;
                if xi >= -1e-12 && xj >= -1e-12 {
                    consider(xi + xj);
                }
            }
        }
        best
    }

    #[test]
    fn small_lp_matches_vertex_enumeration() {
        let c = cols(&[&[2.0, 0.0], &[0.0, 2.0], &[1.0, 1.0]]);
        let d = [2.0, 1.0];
        let oracle = enumerate_bfs(&c, &d).unwrap();
        assert_eq!(oracle, 1.5);
        let sol = solve_rmp(&c, &d).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - oracle).abs() < 1e-12);
    }

    #[test]
    fn diagonal_system() {
        let c = cols(&[&[3.0, 0.0, 0.0], &[0.0, 2.0, 0.0], &[0.0, 0.0, 5.0]]);
        let d = [7.0, 4.0, 2.0];
        let sol = solve_rmp(&c, &d).unwrap();
        assert!((sol.lambda[0] - 7.0 / 3.0).abs() < 1e-12);
        assert!((sol.lambda[1] - 2.0).abs() < 1e-12);
        assert!((sol.lambda[2] - 0.4).abs() < 1e-12);
        assert!((sol.objective - (7.0 / 3.0 + 2.0 + 0.4)).abs() < 1e-12);
    }

    #[test]
    fn uncoverable_row_is_infeasible() {
        let sol = solve_rmp(&cols(&[&[1.0, 0.0]]), &[1.0, 1.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        assert_eq!(
            solve_rmp(&cols(&[&[1.0]]), &[1.0, 1.0]),
            Err(LpError::DimensionMismatch { expected: 2, got: 1 })
        );
        assert_eq!(solve_rmp::<f64>(&[], &[1.0]), Err(LpError::NoColumns));
    }

    #[test]
    fn warm_start_requires_basis() {
        let mut s = Solver::<f64>::new(&[1.0], SimplexOptions::default());
        assert_eq!(s.warm_solve(&[1.0], 1.0), Err(LpError::NoBasis));
    }

    #[test]
    fn duplicate_and_nonimproving_columns_keep_objective() {
        let c = cols(&[&[3.0, 0.0], &[0.0, 2.0]]);
        let mut s = Solver::new(&[4.0, 3.0], SimplexOptions::default());
        for col in &c {
            s.add_column(col, 1.0).unwrap();
        }
        let base = s.solve().unwrap();
        let dup = s.warm_solve(&[3.0, 0.0], 1.0).unwrap();
        assert_eq!(dup.objective, base.objective);
        // Reduced cost 1 - (1/3 + 0) > 0.
        let nonimp = s.warm_solve(&[1.0, 0.0], 1.0).unwrap();
        assert!((nonimp.objective - base.objective).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        // Rows 1 and 2 are identical.
        let c = cols(&[&[1.0, 1.0], &[2.0, 2.0]]);
        let sol = solve_rmp(&c, &[2.0, 2.0]).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        let dot: f64 = sol.duals.iter().zip([2.0, 2.0]).map(|(p, d)| p * d).sum();
        assert!((dot - sol.objective).abs() < 1e-12);
    }

    #[test]
    fn at_least_sense_allows_overproduction() {
        let c = cols(&[&[2.0, 1.0]]);
        let opts = SimplexOptions { sense: Sense::AtLeast, ..Default::default() };
        let sol = solve_rmp_with(&c, &[1.0, 1.0], opts).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!(sol.duals.iter().all(|&p| p >= -1e-12));
        // Equality would be infeasible.
        assert_eq!(solve_rmp(&c, &[1.0, 1.0]).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn negative_rhs_rows() {
        let c = cols(&[&[-1.0, 0.0], &[0.0, 1.0]]);
        let sol = solve_rmp(&c, &[-2.0, 3.0]).unwrap();
        assert!((sol.objective - 5.0).abs() < 1e-12);
        let dot: f64 = sol.duals.iter().zip([-2.0, 3.0]).map(|(p, d)| p * d).sum();
        assert!((dot - 5.0).abs() < 1e-12);
    }

    #[test]
    fn runs_in_single_precision() {
        let c: Vec<Vec<f32>> = vec![vec![2.0, 0.0], vec![0.0, 2.0], vec![1.0, 1.0]];
        let sol = solve_rmp(&c, &[2.0f32, 1.0]).unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-5);
    }
}
