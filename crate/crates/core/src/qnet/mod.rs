//! Bipartite graph network used as the Q-function.
//!
//! Node features are embedded linearly, then each message passing round runs
//! two phases:
//!
//! ```text
//! h_c <- relu([h_c | mean_w(h_v : v ~ c)] W_c + b_c)     columns -> constraints
//! h_v <- relu([h_v | mean_w(h_c : c ~ v)] W_v + b_v)     constraints -> columns
//! ```
//!
//! where `mean_w` is the coefficient-weighted neighbour sum divided by the
//! node degree. A two-layer head maps each action node embedding to a scalar.
//! Neighbour sums run in ascending node-id order so the output does not
//! depend on how nodes or edges are stored.
//!
//! Gradients are computed by hand: [`Network::loss_and_grad`] replays the
//! forward pass with its activations cached and walks it backwards.

mod adam;
pub mod checkpoint;

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::scalar::Scalar;
use crate::state::{BipartiteState, COLUMN_FEATURES, CONSTRAINT_FEATURES};

pub use adam::{ADAM_BETA1, ADAM_BETA2, ADAM_EPS};

pub const DEFAULT_HIDDEN: usize = 32;
pub const DEFAULT_ROUNDS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NetError {
    #[error("state has no action nodes")]
    NoActions,
    #[error("action {index} out of range ({available} actions)")]
    BadAction { index: usize, available: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut SplitMix64) -> Self {
        let data = (0..rows * cols).map(|_| T::lit(rng.uniform(-bound, bound))).collect();
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round<T> {
    pub constraint_weight: Tensor<T>,
    pub constraint_bias: Tensor<T>,
    pub column_weight: Tensor<T>,
    pub column_bias: Tensor<T>,
}

/// All trainable tensors. Gradients and Adam moments reuse this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers<T> {
    pub embed_column: Tensor<T>,
    pub embed_constraint: Tensor<T>,
    pub rounds: Vec<Round<T>>,
    pub head_hidden_weight: Tensor<T>,
    pub head_hidden_bias: Tensor<T>,
    pub head_out_weight: Tensor<T>,
    pub head_out_bias: Tensor<T>,
}

impl<T: Scalar> Layers<T> {
    pub fn zeros(hidden: usize, rounds: usize) -> Self {
        let h = hidden;
        Self {
            embed_column: Tensor::zeros(COLUMN_FEATURES, h),
            embed_constraint: Tensor::zeros(CONSTRAINT_FEATURES, h),
            rounds: (0..rounds)
                .map(|_| Round {
                    constraint_weight: Tensor::zeros(2 * h, h),
                    constraint_bias: Tensor::zeros(1, h),
                    column_weight: Tensor::zeros(2 * h, h),
                    column_bias: Tensor::zeros(1, h),
                })
                .collect(),
            head_hidden_weight: Tensor::zeros(h, h),
            head_hidden_bias: Tensor::zeros(1, h),
            head_out_weight: Tensor::zeros(h, 1),
            head_out_bias: Tensor::zeros(1, 1),
        }
    }

    /// Tensor names in canonical order, matching [`Layers::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut names = vec!["embed.column".to_string(), "embed.constraint".to_string()];
        for r in 0..self.rounds.len() {
            for part in ["constraint.weight", "constraint.bias", "column.weight", "column.bias"] {
                names.push(format!("round{r}.{part}"));
            }
        }
        names.extend(["head.hidden.weight", "head.hidden.bias", "head.out.weight", "head.out.bias"].map(String::from));
        names
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.embed_column, &self.embed_constraint];
        for r in &self.rounds {
            out.extend([&r.constraint_weight, &r.constraint_bias, &r.column_weight, &r.column_bias]);
        }
        out.extend([&self.head_hidden_weight, &self.head_hidden_bias, &self.head_out_weight, &self.head_out_bias]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embed_column, &mut self.embed_constraint];
        for r in &mut self.rounds {
            out.extend([&mut r.constraint_weight, &mut r.constraint_bias, &mut r.column_weight, &mut r.column_bias]);
        }
        out.extend([
            &mut self.head_hidden_weight,
            &mut self.head_hidden_bias,
            &mut self.head_out_weight,
            &mut self.head_out_bias,
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub hidden: usize,
    pub rounds: usize,
}

impl Default for Shape {
    fn default() -> Self {
        Self { hidden: DEFAULT_HIDDEN, rounds: DEFAULT_ROUNDS }
    }
}

/// Network weights together with their Adam state.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    pub shape: Shape,
    pub params: Layers<T>,
    pub adam_m: Layers<T>,
    pub adam_v: Layers<T>,
    pub step_count: u64,
}

/// One training example: the Q-value of `action` in `state` should be `target`.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub state: &'a BipartiteState,
    pub action: usize,
    pub target: f64,
}

/// Adjacency in the form the network consumes, with degree-normalized weights.
struct Graph<T> {
    column_x: Tensor<T>,
    constraint_x: Tensor<T>,
    /// For each constraint: (column, coefficient / degree), ascending column id.
    constraint_adj: Vec<Vec<(usize, T)>>,
    /// For each column: (constraint, coefficient / degree), ascending constraint id.
    column_adj: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> Graph<T> {
    fn new(state: &BipartiteState) -> Self {
        let nv = state.column_features.len();
        let nc = state.constraint_features.len();
        let mut column_x = Tensor::zeros(nv, COLUMN_FEATURES);
        for (i, f) in state.column_features.iter().enumerate() {
            for (x, &v) in column_x.row_mut(i).iter_mut().zip(f) {
                *x = T::lit(v);
            }
        }
        let mut constraint_x = Tensor::zeros(nc, CONSTRAINT_FEATURES);
        for (i, f) in state.constraint_features.iter().enumerate() {
            for (x, &v) in constraint_x.row_mut(i).iter_mut().zip(f) {
                *x = T::lit(v);
            }
        }
        let mut con: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nc];
        let mut col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nv];
        for e in &state.edges {
            con[e.constraint].push((e.column, e.coefficient));
            col[e.column].push((e.constraint, e.coefficient));
        }
        let finish = |lists: Vec<Vec<(usize, f64)>>, id: &dyn Fn(usize) -> u32| -> Vec<Vec<(usize, T)>> {
            lists
                .into_iter()
                .map(|mut l| {
                    l.sort_by_key(|&(j, _)| id(j));
                    let deg = l.len() as f64;
                    l.into_iter().map(|(j, w)| (j, T::lit(w / deg))).collect()
                })
                .collect()
        };
        let column_id = |j: usize| state.column_nodes.get(j).map_or(j as u32, |n| n.id);
        let constraint_id = |j: usize| state.constraint_nodes.get(j).map_or(j as u32, |n| n.id);
        Self {
            column_x,
            constraint_x,
            constraint_adj: finish(con, &column_id),
            column_adj: finish(col, &constraint_id),
        }
    }
}

/// `x W`
fn matmul<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(x.cols, w.rows);
    let mut out = Tensor::zeros(x.rows, w.cols);
    for i in 0..x.rows {
        let xi = x.row(i);
        let oi = out.row_mut(i);
        for (a, &xa) in xi.iter().enumerate() {
            if xa == T::zero() {
                continue;
            }
            for (o, &wv) in oi.iter_mut().zip(w.row(a)) {
                *o += xa * wv;
            }
        }
    }
    out
}

/// `relu([left | right] W + b)` without materializing the concatenation.
fn concat_affine_relu<T: Scalar>(left: &Tensor<T>, right: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(left.rows, w.cols);
    for i in 0..left.rows {
        let oi = out.row_mut(i);
        oi.copy_from_slice(b.row(0));
        for (a, &x) in left.row(i).iter().chain(right.row(i)).enumerate() {
            if x == T::zero() {
                continue;
            }
            let wa = w.row(a);
            for (o, &wv) in oi.iter_mut().zip(wa) {
                *o += x * wv;
            }
        }
        for o in oi.iter_mut() {
            if *o < T::zero() {
                *o = T::zero();
            }
        }
    }
    out
}

fn aggregate<T: Scalar>(adj: &[Vec<(usize, T)>], h: &Tensor<T>) -> Tensor<T> {
    let mut out = Tensor::zeros(adj.len(), h.cols);
    for (i, nbrs) in adj.iter().enumerate() {
        let oi = out.row_mut(i);
        for &(j, w) in nbrs {
            for (o, &x) in oi.iter_mut().zip(h.row(j)) {
                *o += w * x;
            }
        }
    }
    out
}

/// Cached activations of one forward pass.
struct Trace<T> {
    /// Column embeddings after round `r` (index 0 is the linear embedding).
    hv: Vec<Tensor<T>>,
    hc: Vec<Tensor<T>>,
    /// Constraint-side aggregation in round `r`.
    ac: Vec<Tensor<T>>,
    /// Column-side aggregation in round `r`.
    av: Vec<Tensor<T>>,
}

struct HeadTrace<T> {
    hidden: Vec<T>,
    q: T,
}

impl<T: Scalar> Network<T> {
    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases and moments.
    pub fn new(hidden: usize, rounds: usize, seed: u64) -> Self {
        assert!(hidden >= 1 && rounds >= 1, "hidden width and rounds must be positive");
        let mut rng = SplitMix64::new(seed);
        let mut params = Layers::zeros(hidden, rounds);
        let names = params.names();
        for (t, name) in params.tensors_mut().into_iter().zip(names) {
            if name.ends_with("bias") {
                continue;
            }
            let bound = 1.0 / (t.rows as f64).sqrt();
            *t = Tensor::uniform(t.rows, t.cols, bound, &mut rng);
        }
        Self {
            shape: Shape { hidden, rounds },
            adam_m: Layers::zeros(hidden, rounds),
            adam_v: Layers::zeros(hidden, rounds),
            params,
            step_count: 0,
        }
    }

    fn check_state(&self, state: &BipartiteState) -> Result<(), NetError> {
        if state.action_indices.is_empty() {
            return Err(NetError::NoActions);
        }
        Ok(())
    }

    fn embed_and_pass(&self, g: &Graph<T>) -> Trace<T> {
        let p = &self.params;
        let mut trace = Trace {
            hv: vec![matmul(&g.column_x, &p.embed_column)],
            hc: vec![matmul(&g.constraint_x, &p.embed_constraint)],
            ac: Vec::with_capacity(self.shape.rounds),
            av: Vec::with_capacity(self.shape.rounds),
        };
        for round in &p.rounds {
            let hv = trace.hv.last().expect("embedding present");
            let hc = trace.hc.last().expect("embedding present");
            let ac = aggregate(&g.constraint_adj, hv);
            let hc_next = concat_affine_relu(hc, &ac, &round.constraint_weight, &round.constraint_bias);
            let av = aggregate(&g.column_adj, &hc_next);
            let hv_next = concat_affine_relu(hv, &av, &round.column_weight, &round.column_bias);
            trace.ac.push(ac);
            trace.av.push(av);
            trace.hc.push(hc_next);
            trace.hv.push(hv_next);
        }
        trace
    }

    fn head(&self, h: &[T]) -> HeadTrace<T> {
        let p = &self.params;
        let mut hidden: Vec<T> = p.head_hidden_bias.row(0).to_vec();
        for (a, &x) in h.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (o, &w) in hidden.iter_mut().zip(p.head_hidden_weight.row(a)) {
                *o += x * w;
            }
        }
        for o in hidden.iter_mut() {
            if *o < T::zero() {
                *o = T::zero();
            }
        }
        let q = hidden
            .iter()
            .zip(&p.head_out_weight.data)
            .fold(p.head_out_bias.data[0], |acc, (&u, &w)| acc + u * w);
        HeadTrace { hidden, q }
    }

    /// Q-values of the state's action nodes, in `action_indices` order.
    pub fn forward_t(&self, state: &BipartiteState) -> Result<Vec<T>, NetError> {
        self.check_state(state)?;
        let g = Graph::new(state);
        let trace = self.embed_and_pass(&g);
        let hv = trace.hv.last().expect("rounds ran");
        Ok(state.action_indices.iter().map(|&a| self.head(hv.row(a)).q).collect())
    }

    pub fn forward(&self, state: &BipartiteState) -> Result<Vec<f64>, NetError> {
        Ok(self.forward_t(state)?.into_iter().map(Scalar::as_f64).collect())
    }

    /// Mean squared error over the batch and its exact gradient.
    pub fn loss_and_grad(&self, batch: &[Sample<'_>]) -> Result<(T, Layers<T>), NetError> {
        if batch.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        let mut grads = Layers::zeros(self.shape.hidden, self.shape.rounds);
        let mut loss = T::zero();
        let inv_n = T::one() / T::lit(batch.len() as f64);
        for s in batch {
            self.check_state(s.state)?;
            let node = *s.state.action_indices.get(s.action).ok_or(NetError::BadAction {
                index: s.action,
                available: s.state.action_indices.len(),
            })?;
            let g = Graph::new(s.state);
            let trace = self.embed_and_pass(&g);
            let hv_last = trace.hv.last().expect("rounds ran");
            let head = self.head(hv_last.row(node));
            let err = head.q - T::lit(s.target);
            loss += err * err * inv_n;
            let dq = T::lit(2.0) * err * inv_n;
            self.backward(&g, &trace, node, &head, dq, &mut grads);
        }
        Ok((loss, grads))
    }

    fn backward(&self, g: &Graph<T>, trace: &Trace<T>, node: usize, head: &HeadTrace<T>, dq: T, grads: &mut Layers<T>) {
        let p = &self.params;
        let h = self.shape.hidden;
        let rounds = self.shape.rounds;

        // Head.
        grads.head_out_bias.data[0] += dq;
        let mut dz1 = vec![T::zero(); h];
        for j in 0..h {
            grads.head_out_weight.data[j] += dq * head.hidden[j];
            if head.hidden[j] > T::zero() {
                dz1[j] = dq * p.head_out_weight.data[j];
            }
        }
        let hv_last = &trace.hv[rounds];
        let x = hv_last.row(node);
        let mut dhv = Tensor::zeros(hv_last.rows, h);
        for a in 0..h {
            let ga = grads.head_hidden_weight.row_mut(a);
            for j in 0..h {
                ga[j] += x[a] * dz1[j];
            }
        }
        for j in 0..h {
            grads.head_hidden_bias.data[j] += dz1[j];
        }
        {
            let d = dhv.row_mut(node);
            for (a, da) in d.iter_mut().enumerate() {
                *da = p.head_hidden_weight.row(a).iter().zip(&dz1).fold(T::zero(), |acc, (&w, &z)| acc + w * z);
            }
        }
        let mut dhc = Tensor::zeros(trace.hc[rounds].rows, h);

        for r in (0..rounds).rev() {
            let round = &p.rounds[r];
            let gr = &mut grads.rounds[r];

            // Phase 2: h_v[r+1] = relu([h_v[r] | a_v[r]] W_v + b_v).
            let (dhv_prev, dav) = affine_backward(
                &dhv,
                &trace.hv[r + 1],
                &trace.hv[r],
                &trace.av[r],
                &round.column_weight,
                &mut gr.column_weight,
                &mut gr.column_bias,
            );
            for (v, nbrs) in g.column_adj.iter().enumerate() {
                for &(c, w) in nbrs {
                    let src = dav.row(v);
                    for (o, &s) in dhc.row_mut(c).iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }

            // Phase 1: h_c[r+1] = relu([h_c[r] | a_c[r]] W_c + b_c).
            let (dhc_prev, dac) = affine_backward(
                &dhc,
                &trace.hc[r + 1],
                &trace.hc[r],
                &trace.ac[r],
                &round.constraint_weight,
                &mut gr.constraint_weight,
                &mut gr.constraint_bias,
            );
            let mut dhv_next = dhv_prev;
            for (c, nbrs) in g.constraint_adj.iter().enumerate() {
                for &(v, w) in nbrs {
                    let src = dac.row(c);
                    for (o, &s) in dhv_next.row_mut(v).iter_mut().zip(src) {
                        *o += w * s;
                    }
                }
            }
            dhv = dhv_next;
            dhc = dhc_prev;
        }

        accumulate_xt_dy(&g.column_x, &dhv, &mut grads.embed_column);
        accumulate_xt_dy(&g.constraint_x, &dhc, &mut grads.embed_constraint);
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_parameters()
    }
}

/// `gw += x' dy`
fn accumulate_xt_dy<T: Scalar>(x: &Tensor<T>, dy: &Tensor<T>, gw: &mut Tensor<T>) {
    for i in 0..x.rows {
        let dyi = dy.row(i);
        for (a, &xa) in x.row(i).iter().enumerate() {
            if xa == T::zero() {
                continue;
            }
            for (g, &d) in gw.row_mut(a).iter_mut().zip(dyi) {
                *g += xa * d;
            }
        }
    }
}

/// Backward through `out = relu([left | right] W + b)`.
///
/// Accumulates into `gw`, `gb` and returns the gradients for `left` and `right`.
fn affine_backward<T: Scalar>(
    dout: &Tensor<T>,
    out: &Tensor<T>,
    left: &Tensor<T>,
    right: &Tensor<T>,
    w: &Tensor<T>,
    gw: &mut Tensor<T>,
    gb: &mut Tensor<T>,
) -> (Tensor<T>, Tensor<T>) {
    let h = left.cols;
    let n = out.rows;
    let mut dz = Tensor::zeros(n, out.cols);
    for i in 0..n {
        for ((z, &d), &o) in dz.row_mut(i).iter_mut().zip(dout.row(i)).zip(out.row(i)) {
            if o > T::zero() {
                *z = d;
            }
        }
    }
    let mut dleft = Tensor::zeros(n, h);
    let mut dright = Tensor::zeros(n, h);
    for i in 0..n {
        let dzi = dz.row(i);
        if dzi.iter().all(|&d| d == T::zero()) {
            continue;
        }
        for (g, &d) in gb.data.iter_mut().zip(dzi) {
            *g += d;
        }
        for a in 0..2 * h {
            let xa = if a < h { left.row(i)[a] } else { right.row(i)[a - h] };
            let wa = w.row(a);
            let mut acc = T::zero();
            let ga = gw.row_mut(a);
            for j in 0..dzi.len() {
                ga[j] += xa * dzi[j];
                acc += wa[j] * dzi[j];
            }
            if a < h {
                dleft.row_mut(i)[a] = acc;
            } else {
                dright.row_mut(i)[a - h] = acc;
            }
        }
    }
    (dleft, dright)
}
