//! The column generation loop, exposed as a reinforcement learning environment.
//!
//! One [`CgEnv`] owns the restricted master of a single instance. Each
//! [`CgEnv::step`] adds the chosen candidate, re-solves the master from the
//! previous basis, prices with the new duals and reports the reward
//! `alpha * (obj_prev - obj_now) / obj_0 - 1`.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::instances::Instance;
use crate::policies::{Policy, PolicyError};
use crate::pricing::{kbest_knapsack, CandidateSet, Pattern, DEFAULT_K, DEFAULT_TOL_RC};
use crate::simplex::{LpError, LpSolution, LpStatus, Sense, SimplexOptions, Solver};
use crate::state::{build_state, normalize_features, BipartiteState};

/// A column counts as "in the basis" when its value exceeds this.
pub const BASIS_THRESHOLD: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 1000;

#[derive(Debug, Error)]
pub enum CgError {
    #[error("simplex: {0}")]
    Lp(#[from] LpError),
    #[error("restricted master is infeasible")]
    Infeasible,
    #[error("action {index} out of range ({available} candidates)")]
    InvalidAction { index: usize, available: usize },
    #[error("episode already finished")]
    EpisodeDone,
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub k: usize,
    pub tol_rc: f64,
    pub alpha: f64,
    pub sense: Sense,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self { k: DEFAULT_K, tol_rc: DEFAULT_TOL_RC, alpha: 300.0, sense: Sense::Equal }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ColumnDynamics {
    pub iters_in_basis: u32,
    pub iters_out_of_basis: u32,
    pub entered_last_iter: bool,
    pub left_last_iter: bool,
    pub in_basis: bool,
}

#[derive(Debug, Clone)]
pub struct RmpState {
    pub columns: Vec<Pattern>,
    pub solution: LpSolution<f64>,
    pub iteration: usize,
    pub obj_history: Vec<f64>,
    pub dynamics: Vec<ColumnDynamics>,
}

impl RmpState {
    pub fn objective(&self) -> f64 {
        self.solution.objective
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub objective: f64,
    pub num_candidates: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
    /// `None` is the terminal marker.
    pub next_state: Option<BipartiteState>,
    pub info: StepInfo,
}

/// `alpha * (obj_prev - obj_now) / obj_0 - 1`.
pub fn reward(alpha: f64, obj_0: f64, obj_prev: f64, obj_now: f64) -> f64 {
    alpha * ((obj_prev - obj_now) / obj_0) - 1.0
}

/// One homogeneous pattern per order type: `floor(L / a_i)` pieces of size `a_i`.
pub fn init_columns(instance: &Instance) -> Vec<Pattern> {
    let n = instance.num_order_types();
    let zero_duals = vec![0.0; n];
    (0..n)
        .map(|i| {
            let mut counts = vec![0u32; n];
            counts[i] = (instance.roll_length / instance.sizes[i]) as u32;
            Pattern::new(counts, &instance.sizes, instance.roll_length, &zero_duals)
                .expect("homogeneous pattern fits")
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct CgEnv {
    instance: Instance,
    config: EnvConfig,
    solver: Solver<f64>,
    demands: Vec<f64>,
    rmp: RmpState,
    candidates: CandidateSet,
    state: Option<BipartiteState>,
}

impl CgEnv {
    /// Builds the initial master, solves it and prices the first candidates.
    pub fn reset(instance: &Instance, config: EnvConfig) -> Result<Self, CgError> {
        let demands: Vec<f64> = instance.demands.iter().map(|&d| d as f64).collect();
        let opts = SimplexOptions { sense: config.sense, ..Default::default() };
        let mut solver = Solver::new(&demands, opts);
        let mut columns = init_columns(instance);
        for c in &columns {
            solver.add_column(&c.as_f64(), 1.0)?;
        }
        let solution = solver.solve()?;
        if solution.status != LpStatus::Optimal {
            return Err(CgError::Infeasible);
        }
        for c in &mut columns {
            c.reprice(&solution.duals);
        }
        let dynamics = solution
            .lambda
            .iter()
            .map(|&l| ColumnDynamics { in_basis: l > BASIS_THRESHOLD, ..Default::default() })
            .collect();
        let candidates = price(instance, &config, &solution.duals);
        let rmp = RmpState {
            columns,
            obj_history: vec![solution.objective],
            solution,
            iteration: 0,
            dynamics,
        };
        Ok(Self { instance: instance.clone(), config, solver, demands, rmp, candidates, state: None })
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn rmp(&self) -> &RmpState {
        &self.rmp
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn demands(&self) -> &[f64] {
        &self.demands
    }

    pub fn is_done(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Normalized state of the current iteration, or `None` once converged.
    pub fn observe(&mut self) -> Option<&BipartiteState> {
        if self.is_done() {
            return None;
        }
        if self.state.is_none() {
            let raw = build_state(&self.rmp, &self.candidates, &self.instance);
            self.state = Some(normalize_features(&raw));
        }
        self.state.as_ref()
    }

    pub fn raw_state(&self) -> Option<BipartiteState> {
        (!self.is_done()).then(|| build_state(&self.rmp, &self.candidates, &self.instance))
    }

    /// Objective the master would reach if candidate `index` were added.
    pub fn lookahead_objective(&self, index: usize) -> Result<f64, CgError> {
        let pattern = self.candidate(index)?;
        let mut trial = self.solver.clone();
        let sol = trial.warm_solve(&pattern.as_f64(), 1.0)?;
        if sol.status != LpStatus::Optimal {
            return Err(CgError::Infeasible);
        }
        Ok(sol.objective)
    }

    fn candidate(&self, index: usize) -> Result<&Pattern, CgError> {
        if self.is_done() {
            return Err(CgError::EpisodeDone);
        }
        self.candidates
            .patterns
            .get(index)
            .ok_or(CgError::InvalidAction { index, available: self.candidates.len() })
    }

    /// Applies an action without building the next graph state.
    pub fn advance(&mut self, index: usize) -> Result<(f64, StepInfo), CgError> {
        let pattern = self.candidate(index)?.clone();
        let solution = self.solver.warm_solve(&pattern.as_f64(), 1.0)?;
        if solution.status != LpStatus::Optimal {
            return Err(CgError::Infeasible);
        }
        self.rmp.columns.push(pattern);
        self.rmp.dynamics.push(ColumnDynamics::default());
        let last = self.rmp.columns.len() - 1;
        for (p, (dyn_, &lambda)) in self.rmp.dynamics.iter_mut().zip(&solution.lambda).enumerate() {
            let now = lambda > BASIS_THRESHOLD;
            if p != last {
                if now {
                    dyn_.iters_in_basis += 1;
                } else {
                    dyn_.iters_out_of_basis += 1;
                }
            }
            dyn_.entered_last_iter = now && !dyn_.in_basis;
            dyn_.left_last_iter = !now && dyn_.in_basis;
            dyn_.in_basis = now;
        }
        for c in &mut self.rmp.columns {
            c.reprice(&solution.duals);
        }
        let obj_0 = self.rmp.obj_history[0];
        let obj_prev = *self.rmp.obj_history.last().expect("history starts at reset");
        let r = reward(self.config.alpha, obj_0, obj_prev, solution.objective);
        self.rmp.obj_history.push(solution.objective);
        self.rmp.iteration += 1;
        self.candidates = price(&self.instance, &self.config, &solution.duals);
        self.rmp.solution = solution;
        self.state = None;
        let info = StepInfo { objective: self.rmp.objective(), num_candidates: self.candidates.len() };
        Ok((r, info))
    }

    pub fn step(&mut self, index: usize) -> Result<StepOutcome, CgError> {
        let (reward, info) = self.advance(index)?;
        let next_state = self.observe().cloned();
        Ok(StepOutcome { reward, done: next_state.is_none(), next_state, info })
    }
}

fn price(instance: &Instance, config: &EnvConfig, duals: &[f64]) -> CandidateSet {
    kbest_knapsack(duals, &instance.sizes, instance.roll_length, config.k, config.tol_rc)
}

#[derive(Debug, Clone)]
pub struct CgRun {
    /// Number of master solves (pricing rounds), i.e. columns added plus one.
    pub iterations: usize,
    pub columns_added: usize,
    pub objective: f64,
    pub trajectory: Vec<f64>,
    pub wall_time: Duration,
    pub converged: bool,
}

/// Runs column generation to convergence (or `max_iters` added columns) under `policy`.
pub fn run_cg(instance: &Instance, policy: &Policy, config: &EnvConfig, max_iters: usize) -> Result<CgRun, CgError> {
    assert!(max_iters >= 1, "max_iters must be at least 1");
    let start = Instant::now();
    let mut env = CgEnv::reset(instance, config.clone())?;
    while !env.is_done() && env.rmp().iteration < max_iters {
        let action = policy.select(&mut env)?;
        env.advance(action)?;
    }
    let wall_time = start.elapsed();
    let rmp = env.rmp();
    Ok(CgRun {
        iterations: rmp.iteration + 1,
        columns_added: rmp.iteration,
        objective: rmp.objective(),
        trajectory: rmp.obj_history.clone(),
        wall_time,
        converged: env.is_done(),
    })
}

/// Maps `obj_0 -> 1` and `obj_T -> 0`; a flat trajectory maps to all zeros.
pub fn normalize_trajectory(trajectory: &[f64]) -> Vec<f64> {
    let (Some(&first), Some(&last)) = (trajectory.first(), trajectory.last()) else {
        return Vec::new();
    };
    let span = first - last;
    trajectory
        .iter()
        .map(|&o| if span > 0.0 { ((o - last) / span).clamp(0.0, 1.0) } else { 0.0 })
        .collect()
}

pub const CSV_HEADER: &str = "# rlcg-csv v1";

pub fn trajectory_csv(trajectory: &[f64]) -> String {
    let mut out = format!("{CSV_HEADER}\niteration,objective,normalized_objective\n");
    for (t, (o, n)) in trajectory.iter().zip(normalize_trajectory(trajectory)).enumerate() {
        let _ = writeln!(out, "{t},{o},{n}");
    }
    out
}
