//! Cost-based attribute ordering for plan nodes.
//!
//! The cost of an order is `Σ icost(v) · weight(v)`. An input's layout at a
//! vertex is guessed as a bitset on its first level and a sorted list on
//! later ones; relations dense over every key cost nothing.

use crate::error::{Error, Result};
use crate::set::{Layout, LayoutCostTable};

/// Above this many constrained permutations the search turns greedy.
pub const EXHAUSTIVE_LIMIT: usize = 200_000;

/// One relation (or child result) as seen by the optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderInput {
    pub name: String,
    pub vertices: Vec<usize>,
    pub score: u64,
    /// Every level is dense, so intersecting it is free.
    pub dense: bool,
    /// Vertices on which this input carries a key-equality selection.
    pub selected: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderCost {
    pub icosts: Vec<u64>,
    pub weights: Vec<u64>,
    pub total: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrderConstraints {
    /// Vertices that must precede all others.
    pub materialized: Vec<usize>,
    /// Pairs `(u, v)` where `u` must come before `v`.
    pub before: Vec<(usize, usize)>,
    /// Whether the one-swap relaxation of materialized-first is allowed.
    pub allow_relaxed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrderChoice {
    pub order: Vec<usize>,
    pub relaxed: bool,
    pub cost: OrderCost,
}

/// `⌈100 · |r| / max |r|⌉`, at least 1.
pub fn score_relations(cardinalities: &[usize]) -> Result<Vec<u64>> {
    let heavy = *cardinalities.iter().max().ok_or_else(|| Error::Plan("cannot score an empty set of relations".into()))?;
    let heavy = heavy.max(1) as u64;
    Ok(cardinalities.iter().map(|&c| (100 * c as u64).div_ceil(heavy).max(1)).collect())
}

/// Maximum score among inputs selecting on `v`, else the minimum score of
/// the inputs containing `v`.
pub fn vertex_weight(v: usize, inputs: &[OrderInput]) -> u64 {
    let selected = inputs.iter().filter(|i| i.selected.contains(&v)).map(|i| i.score).max();
    selected.unwrap_or_else(|| inputs.iter().filter(|i| i.vertices.contains(&v)).map(|i| i.score).min().unwrap_or(0))
}

/// Per-position intersection cost of `order`.
pub fn assign_icosts(order: &[usize], inputs: &[OrderInput], table: &LayoutCostTable) -> Vec<u64> {
    let mut visited = vec![false; inputs.len()];
    order
        .iter()
        .map(|&v| {
            let mut layouts = Vec::new();
            let mut dense = 0;
            for (i, input) in inputs.iter().enumerate() {
                if !input.vertices.contains(&v) {
                    continue;
                }
                let layout = if visited[i] { Layout::Uint } else { Layout::Bitset };
                visited[i] = true;
                if input.dense {
                    dense += 1;
                } else {
                    layouts.push(layout);
                }
            }
            if layouts.len() + dense < 2 {
                0
            } else if layouts.len() < 2 {
                table.dense_relation
            } else {
                table.icost(&layouts)
            }
        })
        .collect()
}

pub fn order_cost(order: &[usize], inputs: &[OrderInput], table: &LayoutCostTable) -> OrderCost {
    let icosts = assign_icosts(order, inputs, table);
    let weights: Vec<u64> = order.iter().map(|&v| vertex_weight(v, inputs)).collect();
    let total = icosts.iter().zip(&weights).map(|(c, w)| c * w).sum();
    OrderCost { icosts, weights, total }
}

fn respects(order: &[usize], before: &[(usize, usize)]) -> bool {
    before.iter().all(|&(u, v)| match (order.iter().position(|&x| x == u), order.iter().position(|&x| x == v)) {
        (Some(a), Some(b)) => a < b,
        _ => true,
    })
}

fn factorial(n: usize) -> usize {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k)).unwrap_or(usize::MAX)
}

fn permutations(vertices: &[usize], c: &OrderConstraints, out: &mut Vec<Vec<usize>>) {
    fn rec(prefix: &mut Vec<usize>, rest: &mut Vec<usize>, c: &OrderConstraints, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(prefix.clone());
            return;
        }
        let mat_pending = rest.iter().any(|v| c.materialized.contains(v));
        for i in 0..rest.len() {
            let v = rest[i];
            if mat_pending && !c.materialized.contains(&v) {
                continue;
            }
            if c.before.iter().any(|&(u, w)| w == v && rest.contains(&u)) {
                continue;
            }
            rest.remove(i);
            prefix.push(v);
            rec(prefix, rest, c, out);
            prefix.pop();
            rest.insert(i, v);
        }
    }
    rec(&mut Vec::new(), &mut vertices.to_vec(), c, out);
}

fn greedy(vertices: &[usize], c: &OrderConstraints, inputs: &[OrderInput], table: &LayoutCostTable) -> Option<Vec<usize>> {
    let mut order: Vec<usize> = Vec::new();
    let mut rest = vertices.to_vec();
    while !rest.is_empty() {
        let mat_pending = rest.iter().any(|v| c.materialized.contains(v));
        let best = rest
            .iter()
            .copied()
            .filter(|v| !mat_pending || c.materialized.contains(v))
            .filter(|&v| !c.before.iter().any(|&(u, w)| w == v && rest.contains(&u)))
            .min_by_key(|&v| {
                let mut trial = order.clone();
                trial.push(v);
                let cost = order_cost(&trial, inputs, table);
                (cost.total, v)
            })?;
        order.push(best);
        rest.retain(|&v| v != best);
    }
    Some(order)
}

/// Every order the search considers: constrained permutations plus the
/// admissible relaxed swaps. Falls back to a single greedy order when the
/// constrained space is too large.
pub fn candidate_orders(vertices: &[usize], c: &OrderConstraints, inputs: &[OrderInput], table: &LayoutCostTable) -> Vec<OrderChoice> {
    let mat = vertices.iter().filter(|v| c.materialized.contains(v)).count();
    let space = factorial(mat).saturating_mul(factorial(vertices.len() - mat));
    let mut orders = Vec::new();
    if space <= EXHAUSTIVE_LIMIT {
        permutations(vertices, c, &mut orders);
    } else if let Some(o) = greedy(vertices, c, inputs, table) {
        orders.push(o);
    }
    let mut out = Vec::new();
    for order in orders {
        let cost = order_cost(&order, inputs, table);
        if c.allow_relaxed {
            if let Some(relaxed) = relaxed_swap(&order, &c.materialized) {
                if respects(&relaxed, &c.before) {
                    let rcost = order_cost(&relaxed, inputs, table);
                    if rcost.icosts.iter().sum::<u64>() < cost.icosts.iter().sum::<u64>() {
                        out.push(OrderChoice { order: relaxed, relaxed: true, cost: rcost });
                    }
                }
            }
        }
        out.push(OrderChoice { order, relaxed: false, cost });
    }
    out
}

/// The swap of the last two slots when the last vertex is the only
/// projected one and the one before it is materialized.
pub fn relaxed_swap(order: &[usize], materialized: &[usize]) -> Option<Vec<usize>> {
    let n = order.len();
    if n < 2 || materialized.contains(&order[n - 1]) || !materialized.contains(&order[n - 2]) {
        return None;
    }
    if order[..n - 1].iter().any(|v| !materialized.contains(v)) {
        return None;
    }
    let mut r = order.to_vec();
    r.swap(n - 2, n - 1);
    Some(r)
}

/// Whether `order` is a sanctioned relaxation: the last two slots are a
/// materialized vertex after the single projected one, and swapping them
/// back strictly raises the summed icost.
pub fn is_valid_relaxation(order: &[usize], materialized: &[usize], inputs: &[OrderInput], table: &LayoutCostTable) -> bool {
    let n = order.len();
    if n < 2 {
        return false;
    }
    let mut original = order.to_vec();
    original.swap(n - 2, n - 1);
    relaxed_swap(&original, materialized).is_some()
        && assign_icosts(order, inputs, table).iter().sum::<u64>() < assign_icosts(&original, inputs, table).iter().sum::<u64>()
}

/// Minimum-cost admissible order; ties go to the lexicographically smallest
/// vertex-id sequence, so the order of first appearance in the query wins.
pub fn choose_order(vertices: &[usize], c: &OrderConstraints, inputs: &[OrderInput], table: &LayoutCostTable) -> Result<OrderChoice> {
    candidate_orders(vertices, c, inputs, table)
        .into_iter()
        .min_by(|a, b| a.cost.total.cmp(&b.cost.total).then_with(|| a.order.cmp(&b.order)))
        .ok_or_else(|| Error::Plan("no attribute order satisfies the ordering constraints".into()))
}
