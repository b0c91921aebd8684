//! Bipartite graph encoding of one column generation iteration.
//!
//! Column nodes are the restricted master's patterns followed by the pricing
//! candidates (the action nodes); constraint nodes are the demand rows. An
//! edge joins a pattern to every order type it cuts, weighted by the count.

use serde::Serialize;

use crate::cg::RmpState;
use crate::instances::Instance;
use crate::pricing::{CandidateSet, Pattern};

pub const COLUMN_FEATURES: usize = 9;
pub const CONSTRAINT_FEATURES: usize = 2;

/// Column feature slots.
pub mod col {
    pub const REDUCED_COST: usize = 0;
    pub const DEGREE: usize = 1;
    pub const SOLUTION_VALUE: usize = 2;
    pub const WASTE: usize = 3;
    pub const ITERS_IN_BASIS: usize = 4;
    pub const ITERS_OUT_OF_BASIS: usize = 5;
    pub const LEFT_BASIS: usize = 6;
    pub const ENTERED_BASIS: usize = 7;
    pub const ACTION: usize = 8;
    /// Binary slots pass through normalization untouched.
    pub const FLAGS: [usize; 3] = [LEFT_BASIS, ENTERED_BASIS, ACTION];
}

/// Constraint feature slots.
pub mod con {
    pub const DUAL: usize = 0;
    pub const DEGREE: usize = 1;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    Column,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnNode {
    /// Stable identity; message passing sums neighbours in ascending id order.
    pub id: u32,
    pub kind: NodeKind,
    pub counts: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstraintNode {
    pub id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub column: usize,
    pub constraint: usize,
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BipartiteState {
    pub column_nodes: Vec<ColumnNode>,
    pub constraint_nodes: Vec<ConstraintNode>,
    pub edges: Vec<Edge>,
    pub column_features: Vec<[f64; COLUMN_FEATURES]>,
    pub constraint_features: Vec<[f64; CONSTRAINT_FEATURES]>,
    /// Column-node indices of the candidates, in candidate order.
    pub action_indices: Vec<usize>,
    pub normalized: bool,
}

fn push_pattern(
    state: &mut BipartiteState,
    pattern: &Pattern,
    kind: NodeKind,
    dynamics: [f64; 5],
    constraint_degree: &mut [usize],
) {
    let v = state.column_nodes.len();
    for (c, &count) in pattern.counts.iter().enumerate() {
        if count > 0 {
            state.edges.push(Edge { column: v, constraint: c, coefficient: count as f64 });
            constraint_degree[c] += 1;
        }
    }
    let mut f = [0.0; COLUMN_FEATURES];
    f[col::REDUCED_COST] = pattern.reduced_cost;
    f[col::DEGREE] = pattern.degree() as f64;
    f[col::SOLUTION_VALUE] = dynamics[0];
    f[col::WASTE] = pattern.waste as f64;
    f[col::ITERS_IN_BASIS] = dynamics[1];
    f[col::ITERS_OUT_OF_BASIS] = dynamics[2];
    f[col::LEFT_BASIS] = dynamics[3];
    f[col::ENTERED_BASIS] = dynamics[4];
    f[col::ACTION] = if kind == NodeKind::Candidate { 1.0 } else { 0.0 };
    state.column_features.push(f);
    state.column_nodes.push(ColumnNode { id: v as u32, kind, counts: pattern.counts.clone() });
}

/// Raw (unnormalized) state for the current iteration.
pub fn build_state(rmp: &RmpState, candidates: &CandidateSet, instance: &Instance) -> BipartiteState {
    let n = instance.num_order_types();
    let mut state = BipartiteState {
        column_nodes: Vec::with_capacity(rmp.columns.len() + candidates.len()),
        constraint_nodes: (0..n as u32).map(|id| ConstraintNode { id }).collect(),
        edges: Vec::new(),
        column_features: Vec::new(),
        constraint_features: Vec::with_capacity(n),
        action_indices: Vec::with_capacity(candidates.len()),
        normalized: false,
    };
    let mut degree = vec![0usize; n];
    for (p, pattern) in rmp.columns.iter().enumerate() {
        let d = &rmp.dynamics[p];
        let dynamics = [
            rmp.solution.lambda[p],
            d.iters_in_basis as f64,
            d.iters_out_of_basis as f64,
            f64::from(u8::from(d.left_last_iter)),
            f64::from(u8::from(d.entered_last_iter)),
        ];
        push_pattern(&mut state, pattern, NodeKind::Column, dynamics, &mut degree);
    }
    for pattern in &candidates.patterns {
        state.action_indices.push(state.column_nodes.len());
        push_pattern(&mut state, pattern, NodeKind::Candidate, [0.0; 5], &mut degree);
    }
    for (i, &dual) in rmp.solution.duals.iter().enumerate() {
        let mut f = [0.0; CONSTRAINT_FEATURES];
        f[con::DUAL] = dual;
        f[con::DEGREE] = degree[i] as f64;
        state.constraint_features.push(f);
    }
    state
}

fn minmax_columns<const D: usize>(rows: &mut [[f64; D]], passthrough: &[usize]) {
    for j in 0..D {
        let is_flag = passthrough.contains(&j) && rows.iter().all(|r| r[j] == 0.0 || r[j] == 1.0);
        if is_flag {
            continue;
        }
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[j]), hi.max(r[j])));
        let span = hi - lo;
        for r in rows.iter_mut() {
            r[j] = if span > 0.0 { ((r[j] - lo) / span).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
}

/// Per-graph min-max scaling of every feature dimension to `[0, 1]`.
///
/// Constant dimensions become zero; binary flag slots already in `{0, 1}`
/// are left as they are.
pub fn normalize_features(state: &BipartiteState) -> BipartiteState {
    let mut out = state.clone();
    minmax_columns(&mut out.column_features, &col::FLAGS);
    minmax_columns(&mut out.constraint_features, &[]);
    out.normalized = true;
    out
}

impl BipartiteState {
    pub fn num_actions(&self) -> usize {
        self.action_indices.len()
    }

    /// Reorders node storage. `column_perm[new] = old`, likewise for constraints.
    /// Node ids travel with their nodes.
    pub fn permuted(&self, column_perm: &[usize], constraint_perm: &[usize]) -> BipartiteState {
        let mut col_new = vec![0; column_perm.len()];
        for (new, &old) in column_perm.iter().enumerate() {
            col_new[old] = new;
        }
        let mut con_new = vec![0; constraint_perm.len()];
        for (new, &old) in constraint_perm.iter().enumerate() {
            con_new[old] = new;
        }
        BipartiteState {
            column_nodes: column_perm.iter().map(|&o| self.column_nodes[o].clone()).collect(),
            constraint_nodes: constraint_perm.iter().map(|&o| self.constraint_nodes[o]).collect(),
            edges: self
                .edges
                .iter()
                .map(|e| Edge { column: col_new[e.column], constraint: con_new[e.constraint], coefficient: e.coefficient })
                .collect(),
            column_features: column_perm.iter().map(|&o| self.column_features[o]).collect(),
            constraint_features: constraint_perm.iter().map(|&o| self.constraint_features[o]).collect(),
            action_indices: self.action_indices.iter().map(|&a| col_new[a]).collect(),
            normalized: self.normalized,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.column_features.iter().flatten().all(|x| x.is_finite())
            && self.constraint_features.iter().flatten().all(|x| x.is_finite())
    }
}

#[derive(Serialize)]
struct DebugDump<'a> {
    column_nodes: &'a [ColumnNode],
    constraint_nodes: &'a [ConstraintNode],
    edges: &'a [Edge],
    action_indices: &'a [usize],
    raw_column_features: &'a [[f64; COLUMN_FEATURES]],
    raw_constraint_features: &'a [[f64; CONSTRAINT_FEATURES]],
    normalized_column_features: &'a [[f64; COLUMN_FEATURES]],
    normalized_constraint_features: &'a [[f64; CONSTRAINT_FEATURES]],
}

/// JSON dump of a raw state alongside its normalized features.
pub fn debug_json(raw: &BipartiteState) -> String {
    let norm = normalize_features(raw);
    let dump = DebugDump {
        column_nodes: &raw.column_nodes,
        constraint_nodes: &raw.constraint_nodes,
        edges: &raw.edges,
        action_indices: &raw.action_indices,
        raw_column_features: &raw.column_features,
        raw_constraint_features: &raw.constraint_features,
        normalized_column_features: &norm.column_features,
        normalized_constraint_features: &norm.constraint_features,
    };
    serde_json::to_string_pretty(&dump).expect("state serializes")
}
