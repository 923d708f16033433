//! Physical plans: decomposition nodes with their inputs, attribute orders,
//! emission modes, and operator choices.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ghd::{self, Ghd};
use crate::ir::{self, Expr, GroupColumn, Hypergraph, QueryIr};
use crate::optimizer::{self, OrderChoice, OrderConstraints, OrderCost, OrderInput};
use crate::semiring::Semiring;
use crate::set::{KeyUnionStrategy, LayoutCostTable};
use crate::storage::Database;

/// Planner thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanConfig {
    pub costs: LayoutCostTable,
    /// Predicted density at or above which key unions use a bitset array.
    pub union_density_threshold: f64,
    /// Universes up to this size always use a bitset array, whose value
    /// array then stays cache resident.
    pub union_dense_universe: u64,
    /// Widest group key handled by per-worker tables.
    pub per_worker_max_width: usize,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig { costs: LayoutCostTable::default(), union_density_threshold: 1.0 / 16.0, union_dense_universe: 1 << 18, per_worker_max_width: 3 }
    }
}

/// Annotation group-by implementation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupStrategy {
    PerWorkerTables,
    SharedConcurrentTable,
}

impl std::fmt::Display for GroupStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroupStrategy::PerWorkerTables => "per_worker_tables",
            GroupStrategy::SharedConcurrentTable => "shared_concurrent_table",
        })
    }
}

/// Chooses per-worker tables for narrow keys.
pub fn choose_group_strategy(key_width: usize, config: &PlanConfig) -> GroupStrategy {
    if key_width <= config.per_worker_max_width {
        GroupStrategy::PerWorkerTables
    } else {
        GroupStrategy::SharedConcurrentTable
    }
}

/// Chooses a bitset array when the universe is small or the predicted
/// output density is high.
pub fn choose_union_strategy(density: f64, universe: u64, config: &PlanConfig) -> KeyUnionStrategy {
    if universe <= config.union_dense_universe || density >= config.union_density_threshold {
        KeyUnionStrategy::BitsetArray
    } else {
        KeyUnionStrategy::HashTable
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSource {
    Edge(usize),
    Child(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanInput {
    pub source: InputSource,
    /// Vertices of the input, sorted by id.
    pub vertices: Vec<usize>,
    /// Stored rows for an edge; smallest base relation below for a child.
    pub cardinality: usize,
    pub dense: bool,
}

/// How a node turns join bindings into output rows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Emit {
    /// One row per binding of the first `n` order positions, folding the
    /// rest.
    Prefix(usize),
    /// The order ends with `[p, m]` where `p` is projected: rows for each
    /// binding of the prefix before `p` are unioned over `m`.
    Relaxed,
    /// Group keys are built once the first `n` positions are bound and
    /// upserted into hash tables.
    Grouped(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodePlan {
    /// Pure selection node evaluated inside its parent.
    pub absorbed: bool,
    /// Vertices the node's join binds.
    pub iter: Vec<usize>,
    /// Vertices of the node's result rows (sorted by id).
    pub mat: Vec<usize>,
    pub inputs: Vec<PlanInput>,
    /// Scalar relations with no joined keys (root only).
    pub nullary: Vec<usize>,
    pub order: Vec<usize>,
    pub relaxed: bool,
    pub cost: OrderCost,
    pub emit: Emit,
    /// Key-union strategy and its predicted density, for relaxed nodes.
    pub union: Option<(KeyUnionStrategy, f64)>,
}

/// Recognized dense linear-algebra shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenseKind {
    MatMat,
    MatVec,
}

/// `out[i, j] = Σ_k a[i, k] · b[k, j]` (or `out[i] = Σ_k a[i, k] · b[k]`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DensePattern {
    pub kind: DenseKind,
    pub a: usize,
    pub b: usize,
    pub i: usize,
    pub k: usize,
    pub j: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub ir: QueryIr,
    pub hg: Hypergraph,
    pub ghd: Ghd,
    pub nodes: Vec<NodePlan>,
    pub group: Option<GroupStrategy>,
    pub dense: Option<DensePattern>,
    pub config: PlanConfig,
}

impl Plan {
    pub fn build(sql: &str, db: &Database) -> Result<Plan> {
        Plan::build_with(sql, db, PlanConfig::default())
    }

    pub fn build_with(sql: &str, db: &Database, config: PlanConfig) -> Result<Plan> {
        let ir = ir::parse(sql, db)?;
        Plan::from_ir(ir, db, config)
    }

    pub fn from_ir(ir: QueryIr, db: &Database, config: PlanConfig) -> Result<Plan> {
        let hg = Hypergraph::build(&ir, db)?;
        let ghd = ghd::plan(&hg)?;
        let mut plan = Plan { nodes: Vec::new(), group: None, dense: None, ir, hg, ghd, config };
        plan.layout(db)?;
        plan.order_nodes(db)?;
        plan.dense = detect_dense(&plan, db);
        Ok(plan)
    }

    pub fn vertex_names(&self) -> Vec<String> {
        self.hg.vertices.iter().map(|v| v.name.clone()).collect()
    }

    pub fn semirings(&self) -> Vec<Semiring> {
        self.hg.passes.iter().map(|p| p.semiring).collect()
    }

    fn relevant(&self) -> BTreeSet<usize> {
        self.hg.group_relevant()
    }

    /// Inputs, bound vertices, and materialized vertices of every node.
    fn layout(&mut self, db: &Database) -> Result<()> {
        let hg = &self.hg;
        let ghd = &self.ghd;
        let relevant = self.relevant();
        let n = ghd.nodes.len();
        let mut nodes: Vec<Option<NodePlan>> = vec![None; n];
        let edge_card = |e: usize| db.relation(&hg.edges[e].relation).map_or(0, |r| r.num_rows());
        let edge_dense = |e: usize| {
            let r = db.relation(&hg.edges[e].relation);
            r.is_some_and(|r| r.trie().fully_dense() && r.key_columns().len() == hg.edges[e].vertices.len() && hg.edges[e].filters.is_empty())
        };
        let absorbed = |c: usize| {
            let t = &ghd.nodes[c];
            t.selection_child && t.children.is_empty() && t.edges.len() == 1
        };
        for t in ghd.postorder() {
            let node = &ghd.nodes[t];
            let mut inputs = Vec::new();
            let mut nullary = Vec::new();
            let push_edge = |e: usize, inputs: &mut Vec<PlanInput>| {
                let mut vertices = hg.edges[e].vertices.clone();
                vertices.sort_unstable();
                inputs.push(PlanInput { source: InputSource::Edge(e), vertices, cardinality: edge_card(e), dense: edge_dense(e) });
            };
            for &e in &node.edges {
                if hg.edges[e].is_nullary() {
                    nullary.push(e);
                } else {
                    push_edge(e, &mut inputs);
                }
            }
            let mut iter: BTreeSet<usize> = node.vertices.iter().copied().collect();
            for &c in &node.children {
                if absorbed(c) {
                    push_edge(ghd.nodes[c].edges[0], &mut inputs);
                } else {
                    let child = nodes[c].as_ref().expect("children planned first");
                    let cardinality = ghd.subtree(c).iter().flat_map(|&s| ghd.nodes[s].edges.iter()).map(|&e| edge_card(e)).min().unwrap_or(0);
                    iter.extend(child.mat.iter().copied());
                    inputs.push(PlanInput { source: InputSource::Child(c), vertices: child.mat.clone(), cardinality, dense: false });
                }
            }
            let mat: Vec<usize> = match node.parent {
                None => iter.iter().copied().filter(|v| relevant.contains(v)).collect(),
                Some(p) => iter.iter().copied().filter(|v| ghd.nodes[p].vertices.contains(v) || relevant.contains(v)).collect(),
            };
            nodes[t] = Some(NodePlan {
                absorbed: node.parent.is_some() && absorbed(t),
                iter: iter.into_iter().collect(),
                mat,
                inputs,
                nullary,
                order: Vec::new(),
                relaxed: false,
                cost: OrderCost { icosts: Vec::new(), weights: Vec::new(), total: 0 },
                emit: Emit::Prefix(0),
                union: None,
            });
        }
        self.nodes = nodes.into_iter().map(|n| n.expect("every node planned")).collect();
        if self.hg.group_mode() {
            self.group = Some(choose_group_strategy(self.hg.group.len(), &self.config));
        }
        Ok(())
    }

    /// Optimizer view of a node's inputs.
    pub fn order_inputs(&self, t: usize) -> Result<Vec<OrderInput>> {
        let node = &self.nodes[t];
        let cards: Vec<usize> = node.inputs.iter().map(|i| i.cardinality).collect();
        if cards.is_empty() {
            return Ok(Vec::new());
        }
        let scores = optimizer::score_relations(&cards)?;
        Ok(node
            .inputs
            .iter()
            .zip(scores)
            .map(|(input, score)| {
                let (name, edges) = match input.source {
                    InputSource::Edge(e) => (self.hg.edges[e].name.clone(), vec![e]),
                    InputSource::Child(c) => (format!("#{c}"), self.ghd.subtree(c).iter().flat_map(|&s| self.ghd.nodes[s].edges.iter().copied()).collect()),
                };
                let selected =
                    self.hg.key_selections.iter().filter(|s| edges.contains(&s.edge) && input.vertices.contains(&s.vertex)).map(|s| s.vertex).collect();
                OrderInput { name, vertices: input.vertices.clone(), score, dense: input.dense, selected }
            })
            .collect())
    }

    /// Ordering constraints of node `t` given its ancestors' orders.
    pub fn order_constraints(&self, t: usize) -> OrderConstraints {
        let node = &self.nodes[t];
        let mut before = Vec::new();
        let mut a = self.ghd.nodes[t].parent;
        while let Some(p) = a {
            let order = &self.nodes[p].order;
            for (x, &u) in order.iter().enumerate() {
                for &v in &order[x + 1..] {
                    if node.iter.contains(&u) && node.iter.contains(&v) && !before.contains(&(u, v)) {
                        before.push((u, v));
                    }
                }
            }
            a = self.ghd.nodes[p].parent;
        }
        let grouped_root = t == 0 && self.hg.group_mode();
        OrderConstraints {
            materialized: if grouped_root { Vec::new() } else { node.mat.clone() },
            before,
            allow_relaxed: !grouped_root && self.hg.passes.len() == 1,
        }
    }

    /// All candidate orders of node `t` under its current constraints.
    pub fn candidate_orders(&self, t: usize) -> Result<Vec<OrderChoice>> {
        let inputs = self.order_inputs(t)?;
        Ok(optimizer::candidate_orders(&self.nodes[t].iter, &self.order_constraints(t), &inputs, &self.config.costs))
    }

    fn order_nodes(&mut self, db: &Database) -> Result<()> {
        for t in self.ghd.preorder() {
            if self.nodes[t].absorbed {
                continue;
            }
            let inputs = self.order_inputs(t)?;
            let choice = optimizer::choose_order(&self.nodes[t].iter, &self.order_constraints(t), &inputs, &self.config.costs)?;
            self.apply_order(t, choice, db);
        }
        Ok(())
    }

    fn apply_order(&mut self, t: usize, choice: OrderChoice, db: &Database) {
        let grouped_root = t == 0 && self.hg.group_mode();
        let node = &self.nodes[t];
        let emit = if grouped_root {
            let relevant = self.relevant();
            Emit::Grouped(choice.order.iter().rposition(|v| relevant.contains(v)).map_or(0, |i| i + 1))
        } else if choice.relaxed {
            Emit::Relaxed
        } else {
            Emit::Prefix(node.mat.len())
        };
        let union = choice.relaxed.then(|| {
            let p = choice.order[choice.order.len() - 2];
            let density = self.predicted_density(t, &choice.order, p, db);
            let universe = self.universe_span(t, choice.order[choice.order.len() - 1], db);
            (choose_union_strategy(density, universe, &self.config), density)
        });
        let node = &mut self.nodes[t];
        node.order = choice.order;
        node.relaxed = choice.relaxed;
        node.cost = choice.cost;
        node.emit = emit;
        node.union = union;
    }

    /// Replaces the order of node `t`, for experiments that compare orders.
    /// The order must be a permutation of the node's bound vertices, and in
    /// nodes that emit key rows it must keep materialized vertices first or
    /// be a relaxed swap.
    pub fn set_order(&mut self, t: usize, order: Vec<usize>, db: &Database) -> Result<()> {
        let node = &self.nodes[t];
        let mut sorted = order.clone();
        sorted.sort_unstable();
        if sorted != node.iter {
            return Err(Error::Plan("order must list exactly the node's attributes".into()));
        }
        let inputs = self.order_inputs(t)?;
        let cost = optimizer::order_cost(&order, &inputs, &self.config.costs);
        let grouped_root = t == 0 && self.hg.group_mode();
        let mat_first = order.iter().take(node.mat.len()).all(|v| node.mat.contains(v));
        let relaxed = !grouped_root && !mat_first && self.hg.passes.len() == 1 && {
            let mut back = order.clone();
            let n = back.len();
            back.swap(n - 2, n - 1);
            optimizer::relaxed_swap(&back, &node.mat).is_some()
        };
        if !grouped_root && !mat_first && !relaxed {
            return Err(Error::Plan("order must place materialized attributes first".into()));
        }
        self.apply_order(t, OrderChoice { order, relaxed, cost }, db);
        // Descendant orders must follow the new global order.
        for c in self.ghd.subtree(t).into_iter().skip(1) {
            if self.nodes[c].absorbed {
                continue;
            }
            let inputs = self.order_inputs(c)?;
            let choice = optimizer::choose_order(&self.nodes[c].iter, &self.order_constraints(c), &inputs, &self.config.costs)?;
            self.apply_order(c, choice, db);
        }
        Ok(())
    }

    /// Average fill of the sets of `p` in the base relations that contain
    /// it, relative to their key span.
    fn universe_span(&self, t: usize, v: usize, db: &Database) -> u64 {
        let mut span = 0;
        for input in &self.nodes[t].inputs {
            let InputSource::Edge(e) = input.source else { continue };
            let edge = &self.hg.edges[e];
            let Some(pos) = edge.vertices.iter().position(|&x| x == v) else { continue };
            let Some(rel) = db.relation(&edge.relation) else { continue };
            let (lo, hi) = rel.trie().level(rel.key_level(edge.columns[pos]).unwrap_or(0)).universe();
            span = span.max(u64::from(hi - lo));
        }
        span
    }

    fn predicted_density(&self, t: usize, order: &[usize], p: usize, db: &Database) -> f64 {
        let mut best: Option<f64> = None;
        for input in &self.nodes[t].inputs {
            let InputSource::Edge(e) = input.source else { continue };
            let edge = &self.hg.edges[e];
            let Some(pos) = edge.vertices.iter().position(|&v| v == p) else { continue };
            let Some(rel) = db.relation(&edge.relation) else { continue };
            let span = |col: usize| {
                let lvl = rel.key_level(col).unwrap_or(0);
                let (lo, hi) = rel.trie().level(lvl).universe();
                (hi - lo).max(1) as f64
            };
            let rank = |v: usize| order.iter().position(|&x| x == v).unwrap_or(usize::MAX);
            let prefixes: f64 = edge.vertices.iter().zip(&edge.columns).filter(|(v, _)| rank(**v) < rank(p)).map(|(_, &c)| span(c)).product();
            let card = rel.num_rows().max(1) as f64;
            let density = card / prefixes.min(card) / span(edge.columns[pos]);
            best = Some(best.map_or(density, |b: f64| b.min(density)));
        }
        best.unwrap_or(1.0).min(1.0)
    }

    fn selection_text(&self, edges: &[usize]) -> Vec<String> {
        let mut out = Vec::new();
        for &e in edges {
            let edge = &self.hg.edges[e];
            for s in self.hg.key_selections.iter().filter(|s| s.edge == e) {
                let col = self.hg.vertices[s.vertex].members.iter().find(|c| c.rel == e).copied().unwrap_or(self.hg.vertices[s.vertex].members[0]);
                out.push(format!("{}={}", self.ir.display_name(col), s.value.literal()));
            }
            for f in &edge.filters {
                let col = ir::ColRef { rel: edge.rel, col: f.column };
                out.push(format!("{}{}{}", self.ir.display_name(col), f.op.symbol(), f.value.literal()));
            }
        }
        out
    }

    /// Deterministic plan description, one line per node.
    pub fn explain(&self) -> String {
        let names = self.vertex_names();
        let list = |vs: &[usize]| vs.iter().map(|&v| names[v].as_str()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut header = format!("plan fhw={}", self.ghd.width);
        let passes: Vec<String> = self.hg.passes.iter().map(|p| p.semiring.to_string()).collect();
        write!(header, " passes=[{}]", passes.join(",")).unwrap();
        let alpha = self.alpha();
        write!(header, " alpha=[{}]", list(&alpha)).unwrap();
        if let Some(g) = self.group {
            write!(header, " groupby={g}").unwrap();
        }
        if let Some(d) = &self.dense {
            write!(header, " dense={}", if d.kind == DenseKind::MatMat { "mm" } else { "mv" }).unwrap();
        }
        out.push_str(&header);
        out.push('\n');
        for t in self.ghd.preorder() {
            let g = &self.ghd.nodes[t];
            let node = &self.nodes[t];
            let mut vs = g.vertices.clone();
            vs.sort_by(|a, b| names[*a].cmp(&names[*b]));
            let edges: Vec<&str> = g.edges.iter().map(|&e| self.hg.edges[e].name.as_str()).collect();
            let terms: Vec<String> = node.cost.icosts.iter().zip(&node.cost.weights).map(|(c, w)| format!("({c},{w})")).collect();
            write!(
                out,
                "{}node{{{}}}[{}] width={} sel=[{}] order=[{}] cost={} terms=[{}]",
                "  ".repeat(self.ghd.depth(t)),
                list(&vs),
                edges.join(","),
                g.width,
                self.selection_text(&g.edges).join(","),
                list(&node.order),
                node.cost.total,
                terms.join(","),
            )
            .unwrap();
            if node.relaxed {
                out.push_str(" relaxed");
            }
            if let Some((u, _)) = node.union {
                write!(out, " union={u}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Non-output key vertices in reverse order of first binding.
    pub fn alpha(&self) -> Vec<usize> {
        let mut seen = Vec::new();
        for t in self.ghd.preorder() {
            for &v in &self.nodes[t].order {
                if !seen.contains(&v) {
                    seen.push(v);
                }
            }
        }
        for &v in &self.hg.alpha {
            if !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen.into_iter().rev().filter(|&v| !self.hg.vertices[v].output).collect()
    }
}

fn detect_dense(plan: &Plan, db: &Database) -> Option<DensePattern> {
    let hg = &plan.hg;
    if plan.ghd.nodes.len() != 1 || hg.edges.len() != 2 || hg.passes.len() != 1 || hg.group_mode() {
        return None;
    }
    let pass = &hg.passes[0];
    if pass.semiring != Semiring::SumProduct || !pass.bags.is_empty() || !hg.key_selections.is_empty() {
        return None;
    }
    for (e, edge) in hg.edges.iter().enumerate() {
        let rel = db.relation(&edge.relation)?;
        let simple = matches!(&pass.edge_exprs[e], Some(Expr::Col(c)) if c.rel == e);
        if !simple || !edge.filters.is_empty() || !edge.self_equal.is_empty() || rel.key_columns().len() != edge.vertices.len() {
            return None;
        }
        let Some(Expr::Col(c)) = &pass.edge_exprs[e] else { return None };
        rel.dense_view(&rel.schema().columns[c.col].name)?;
    }
    let out = hg.output_vertices();
    let groups_are_keys = hg.group.iter().all(|g| matches!(g, GroupColumn::Key(_)));
    if !groups_are_keys {
        return None;
    }
    let pattern = |x: usize, y: usize| -> Option<DensePattern> {
        let (va, vb) = (&hg.edges[x].vertices, &hg.edges[y].vertices);
        match (va.as_slice(), vb.as_slice()) {
            (&[i, k], &[k2, j]) if k == k2 && i != j && i != k && j != k && out == sorted(&[i, j]) => {
                Some(DensePattern { kind: DenseKind::MatMat, a: x, b: y, i, k, j: Some(j) })
            }
            (&[i, k], &[k2]) if k == k2 && i != k && out == [i] => Some(DensePattern { kind: DenseKind::MatVec, a: x, b: y, i, k, j: None }),
            _ => None,
        }
    };
    pattern(0, 1).or_else(|| pattern(1, 0))
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}
