//! Pricing subproblem: the k best cutting patterns by reduced cost.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default candidate pool size.
pub const DEFAULT_K: usize = 10;
/// Reduced-cost threshold for admitting a column (and for convergence).
pub const DEFAULT_TOL_RC: f64 = 1e-6;
/// Largest pattern space the brute-force enumerator will walk.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PricingError {
    #[error("pattern space of {0} vectors exceeds the enumeration limit")]
    TooManyPatterns(u128),
    #[error("item size must be positive")]
    ZeroSize,
}

/// A cutting pattern: how many pieces of each order type are cut from one roll.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub counts: Vec<u32>,
    pub reduced_cost: f64,
    pub waste: u64,
}

impl Pattern {
    /// Builds a pattern, returning `None` if it does not fit in the roll.
    pub fn new(counts: Vec<u32>, sizes: &[u64], roll_length: u64, duals: &[f64]) -> Option<Self> {
        let used = used_length(&counts, sizes);
        (used <= roll_length).then(|| Self {
            reduced_cost: 1.0 - dual_value(&counts, duals),
            waste: roll_length - used,
            counts,
        })
    }

    pub fn degree(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Recomputes the reduced cost against new duals.
    pub fn reprice(&mut self, duals: &[f64]) {
        self.reduced_cost = 1.0 - dual_value(&self.counts, duals);
    }
}

pub fn used_length(counts: &[u32], sizes: &[u64]) -> u64 {
    counts.iter().zip(sizes).map(|(&c, &a)| c as u64 * a).sum()
}

/// `pi . x`, summed left to right in index order.
///
/// Every pricing path uses this exact summation so that equal patterns get
/// bit-identical values.
pub fn dual_value(counts: &[u32], duals: &[f64]) -> f64 {
    counts
        .iter()
        .zip(duals)
        .fold(0.0, |acc, (&c, &p)| acc + p * c as f64)
}

/// Ranking used everywhere: higher dual value first, then the
/// lexicographically larger count vector.
pub fn rank_order(value_a: f64, counts_a: &[u32], value_b: f64, counts_b: &[u32]) -> Ordering {
    value_b
        .partial_cmp(&value_a)
        .unwrap_or(Ordering::Equal)
        .then_with(|| counts_b.cmp(counts_a))
}

/// Improving columns returned by one pricing round, best first.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    pub patterns: Vec<Pattern>,
    pub capacity: usize,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }
}

#[derive(Clone)]
struct Entry {
    value: f64,
    counts: Vec<u32>,
}

/// Merges two best-first lists, keeping the `k` best distinct entries.
fn merge_top_k(a: &[Entry], b: impl Iterator<Item = Entry>, k: usize) -> Vec<Entry> {
    let mut b: Vec<Entry> = b.collect();
    // Shifting by a rounded amount can reorder near-ties.
    b.sort_by(|x, y| rank_order(x.value, &x.counts, y.value, &y.counts));
    let mut out: Vec<Entry> = Vec::with_capacity(k);
    let (mut i, mut j) = (0, 0);
    while out.len() < k && (i < a.len() || j < b.len()) {
        let take_a = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => rank_order(x.value, &x.counts, y.value, &y.counts) != Ordering::Greater,
            (Some(_), None) => true,
            _ => false,
        };
        let e = if take_a {
            i += 1;
            &a[i - 1]
        } else {
            j += 1;
            &b[j - 1]
        };
        if out.iter().all(|o| o.counts != e.counts) {
            out.push(e.clone());
        }
    }
    out
}

/// The `k` patterns with the most negative reduced cost `1 - pi.x`.
///
/// Dynamic program over order types and capacities: after processing type
/// `i`, `table[c]` holds the `k` best patterns over types `0..=i` using at
/// most `c` length units. Type `i` is folded in with the unbounded-knapsack
/// recurrence `table[c] = top_k(old[c], table[c - a_i] + e_i)`, which splits
/// patterns by whether they use type `i` at all, so no pattern is counted
/// twice.
pub fn kbest_knapsack(duals: &[f64], sizes: &[u64], roll_length: u64, k: usize, tol_rc: f64) -> CandidateSet {
    assert_eq!(duals.len(), sizes.len(), "one dual per order type");
    assert!(k >= 1, "k must be at least 1");
    let n = sizes.len();
    let cap = roll_length as usize;
    let empty = Entry { value: 0.0, counts: vec![0; n] };
    let mut table: Vec<Vec<Entry>> = vec![vec![empty]; cap + 1];
    for (i, (&a, &pi)) in sizes.iter().zip(duals).enumerate() {
        let a = a as usize;
        if a == 0 || a > cap {
            continue;
        }
        for c in a..=cap {
            let shifted = table[c - a].iter().map(|e| {
                let mut counts = e.counts.clone();
                counts[i] += 1;
                // Matches `dual_value`: types after `i` are still zero here.
                let value = if counts[i] == 1 {
                    e.value + pi * 1.0
                } else {
                    recompute_prefix(&counts, duals, i)
                };
                Entry { value, counts }
            });
            let merged = merge_top_k(&table[c], shifted, k);
            table[c] = merged;
        }
    }
    let patterns = table[cap]
        .iter()
        .filter(|e| 1.0 - e.value < -tol_rc)
        .map(|e| Pattern {
            reduced_cost: 1.0 - e.value,
            waste: roll_length - used_length(&e.counts, sizes),
            counts: e.counts.clone(),
        })
        .collect();
    CandidateSet { patterns, capacity: k }
}

fn recompute_prefix(counts: &[u32], duals: &[f64], upto: usize) -> f64 {
    dual_value(&counts[..=upto], &duals[..=upto])
}

/// Every feasible pattern (including the empty one), in lexicographic order.
pub fn brute_force_patterns(sizes: &[u64], roll_length: u64) -> Result<Vec<Vec<u32>>, PricingError> {
    if sizes.contains(&0) {
        return Err(PricingError::ZeroSize);
    }
    let space = sizes
        .iter()
        .fold(1u128, |acc, &a| acc.saturating_mul((roll_length / a) as u128 + 1));
    if space > ENUMERATION_LIMIT {
        return Err(PricingError::TooManyPatterns(space));
    }
    let mut out = Vec::new();
    let mut current = vec![0u32; sizes.len()];
    enumerate(sizes, roll_length, 0, &mut current, &mut out);
    Ok(out)
}

fn enumerate(sizes: &[u64], remaining: u64, i: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if i == sizes.len() {
        out.push(current.clone());
        return;
    }
    let max = remaining / sizes[i];
    for c in 0..=max {
        current[i] = c as u32;
        enumerate(sizes, remaining - c * sizes[i], i + 1, current, out);
    }
    current[i] = 0;
}
