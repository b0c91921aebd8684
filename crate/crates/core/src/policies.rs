//! Column selection policies: greedy, one-step lookahead expert, and a trained Q-network.

use thiserror::Error;

use crate::cg::{CgEnv, CgError};
use crate::pricing::CandidateSet;
use crate::state::BipartiteState;
use crate::QNetwork;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PolicyError {
    #[error("no candidates to choose from")]
    NoCandidates,
    #[error("q-network: {0}")]
    Network(String),
}

/// Relative tolerance under which two lookahead objectives count as equal.
pub const EXPERT_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub enum Policy {
    Greedy,
    Expert,
    Rl(Box<QNetwork>),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Greedy => "greedy",
            Policy::Expert => "expert",
            Policy::Rl(_) => "rl",
        }
    }

    /// Picks a candidate index for the environment's current iteration.
    pub fn select(&self, env: &mut CgEnv) -> Result<usize, CgError> {
        match self {
            Policy::Greedy => Ok(greedy_select(env.candidates())?),
            Policy::Expert => expert_select(env),
            Policy::Rl(net) => {
                let state = env.observe().ok_or(PolicyError::NoCandidates)?;
                Ok(rl_select(net, state)?)
            }
        }
    }
}

/// Most negative reduced cost; the lowest index wins ties.
pub fn greedy_select(candidates: &CandidateSet) -> Result<usize, PolicyError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in candidates.patterns.iter().enumerate() {
        if best.map_or(true, |(_, rc)| p.reduced_cost < rc) {
            best = Some((i, p.reduced_cost));
        }
    }
    best.map(|(i, _)| i).ok_or(PolicyError::NoCandidates)
}

/// Adds each candidate tentatively and keeps the one giving the lowest
/// master objective. Ties go to the more negative reduced cost, then the
/// lower index.
pub fn expert_select(env: &CgEnv) -> Result<usize, CgError> {
    let candidates = env.candidates();
    if candidates.is_empty() {
        return Err(PolicyError::NoCandidates.into());
    }
    if candidates.len() == 1 {
        return Ok(0);
    }
    let objectives = (0..candidates.len())
        .map(|i| env.lookahead_objective(i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(pick_expert(&objectives, candidates))
}

pub(crate) fn pick_expert(objectives: &[f64], candidates: &CandidateSet) -> usize {
    let best = objectives.iter().copied().fold(f64::INFINITY, f64::min);
    let cutoff = best + EXPERT_TIE_TOL * best.abs().max(1.0);
    let mut choice: Option<usize> = None;
    for (i, &obj) in objectives.iter().enumerate() {
        if obj > cutoff {
            continue;
        }
        let better = match choice {
            None => true,
            Some(c) => candidates.patterns[i].reduced_cost < candidates.patterns[c].reduced_cost,
        };
        if better {
            choice = Some(i);
        }
    }
    choice.expect("at least one candidate within the cutoff")
}

/// Argmax of the Q-values over action nodes; the lowest index wins ties.
pub fn rl_select(net: &QNetwork, state: &BipartiteState) -> Result<usize, PolicyError> {
    let q = net.forward(state).map_err(|e| PolicyError::Network(e.to_string()))?;
    argmax(&q).ok_or(PolicyError::NoCandidates)
}

pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.map_or(true, |(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
