//! Plan execution: per-node joins in post-order, dense kernels for matrix
//! shapes, and decoding of the root's rows into a result table.

pub mod dense;
pub mod groupby;
pub(crate) mod input;
pub(crate) mod join;

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::ThreadPool;

pub use dense::{BlockedKernel, DenseKernel};
use groupby::AnnotationCodes;
use input::{build_edge_input, child_input, scalar_edge, BagEval, JoinInput, NodeRows};
use join::{run_node, BagSlot, GroupPart, NodeCtx, NodeOutput};

use crate::error::{Error, Result};
use crate::ir::{GroupColumn, OutputColumn};
use crate::plan::{DenseKind, DensePattern, Emit, GroupStrategy, InputSource, Plan};
use crate::result::ResultTable;
use crate::semiring::Semiring;
use crate::set::{Id, KeyUnionStrategy};
use crate::storage::{Database, Dictionary, Value};

/// Shared rayon pool per thread count.
pub(crate) fn pool(threads: usize) -> Arc<ThreadPool> {
    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<ThreadPool>>>> = OnceLock::new();
    let mut pools = POOLS.get_or_init(Default::default).lock().unwrap();
    pools.entry(threads).or_insert_with(|| Arc::new(rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool"))).clone()
}

#[derive(Clone)]
pub struct ExecOptions {
    pub threads: usize,
    /// Runs dense matrix shapes through the generic join.
    pub force_trie_path: bool,
    /// Overrides the planned key-union strategy.
    pub union_strategy: Option<KeyUnionStrategy>,
    /// Overrides the planned annotation GROUP BY strategy.
    pub group_strategy: Option<GroupStrategy>,
    pub kernel: Arc<dyn DenseKernel>,
}

impl Default for ExecOptions {
    fn default() -> Self {
        ExecOptions { threads: 1, force_trie_path: false, union_strategy: None, group_strategy: None, kernel: Arc::new(BlockedKernel::default()) }
    }
}

impl fmt::Debug for ExecOptions {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExecOptions")
            .field("threads", &self.threads)
            .field("force_trie_path", &self.force_trie_path)
            .field("union_strategy", &self.union_strategy)
            .field("group_strategy", &self.group_strategy)
            .field("kernel", &self.kernel.name())
            .finish()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExecStats {
    /// Multi-way intersections performed.
    pub intersections: u64,
    /// Total size of all intersection results.
    pub intermediate_tuples: u64,
    /// Rows emitted by all nodes.
    pub emitted_rows: u64,
    /// Physical operator choices, one entry per decision.
    pub operators: Vec<String>,
    pub dense_path: bool,
}

impl fmt::Display for ExecStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "intersections={}", self.intersections)?;
        writeln!(f, "intermediate_tuples={}", self.intermediate_tuples)?;
        writeln!(f, "emitted_rows={}", self.emitted_rows)?;
        writeln!(f, "operators=[{}]", self.operators.join(","))?;
        write!(f, "dense_path={}", self.dense_path)
    }
}

/// Group key of the root: ids in GROUP BY order, or annotation codes.
enum RootRows {
    Keys(NodeRows),
    Groups { keys: Vec<Vec<u32>>, vals: Vec<Vec<f64>>, codes: Vec<Option<Vec<Value>>> },
}

pub fn execute(plan: &Plan, db: &Database, opts: &ExecOptions) -> Result<(ResultTable, ExecStats)> {
    let mut stats = ExecStats::default();
    let threads = opts.threads.max(1);
    if let (Some(pattern), false) = (&plan.dense, opts.force_trie_path) {
        let rows = execute_dense(plan, db, pattern, opts, threads)?;
        stats.dense_path = true;
        stats.operators.push(format!("dense={}", opts.kernel.name()));
        stats.emitted_rows = rows.len() as u64;
        return Ok((finish(plan, db, RootRows::Keys(rows))?, stats));
    }
    let hg = &plan.hg;
    let semirings: Vec<Semiring> = if hg.passes.is_empty() { vec![Semiring::SumProduct] } else { plan.semirings() };
    let np = semirings.len();

    let mut init = semirings.iter().map(|s| s.one()).collect::<Vec<f64>>();
    for &e in &plan.nodes[0].nullary {
        match scalar_edge(db, hg, e) {
            None => return Ok((finish(plan, db, RootRows::Keys(NodeRows { passes: np, ..Default::default() }))?, stats)),
            Some(vals) => {
                for (p, v) in vals.into_iter().enumerate() {
                    init[p] = semirings[p].times(init[p], v);
                }
            }
        }
    }

    let mut results: Vec<Option<NodeRows>> = vec![None; plan.nodes.len()];
    for t in plan.ghd.postorder() {
        let node = &plan.nodes[t];
        if node.absorbed {
            continue;
        }
        let order = &node.order;
        let mut inputs: Vec<JoinInput> = Vec::with_capacity(node.inputs.len());
        for pi in &node.inputs {
            inputs.push(match pi.source {
                InputSource::Edge(e) => {
                    let pass_exprs: Vec<(Semiring, Option<&crate::ir::Expr>, bool)> = if hg.passes.is_empty() {
                        vec![(Semiring::SumProduct, None, false)]
                    } else {
                        hg.passes.iter().map(|p| (p.semiring, p.edge_exprs[e].as_ref(), p.bag_of(e).is_some())).collect()
                    };
                    build_edge_input(db, hg, e, order, &pass_exprs)?
                }
                InputSource::Child(c) => child_input(results[c].as_ref().expect("children run first"), order, db.set_config()),
            });
        }
        let node_edges: Vec<usize> = inputs.iter().filter_map(|i| i.edge).collect();
        let fixed = fixed_bindings(plan, db, order, &node_edges);
        let mut bags = Vec::new();
        for (p, pass) in hg.passes.iter().enumerate() {
            for bag in &pass.bags {
                if !bag.edges.iter().all(|e| node_edges.contains(e)) {
                    continue;
                }
                let members = bag.edges.iter().map(|&e| (e, inputs.iter().position(|i| i.edge == Some(e)).unwrap())).collect();
                bags.push(BagSlot { pass: p, eval: BagEval::new(db, hg, &bag.expr), members });
            }
        }
        let grouped = matches!(node.emit, Emit::Grouped(_));
        let group = if grouped { group_parts(plan, db, order)? } else { Vec::new() };
        let union = opts.union_strategy.or(node.union.map(|u| u.0)).unwrap_or(KeyUnionStrategy::HashTable);
        if matches!(node.emit, Emit::Relaxed) {
            stats.operators.push(format!("union={union}"));
        }
        let group_strategy = grouped.then(|| opts.group_strategy.or(plan.group).unwrap_or(GroupStrategy::PerWorkerTables));
        if let Some(g) = group_strategy {
            stats.operators.push(format!("groupby={g}"));
        }
        let node_init = if t == 0 { init.clone() } else { semirings.iter().map(|s| s.one()).collect() };
        let ctx = NodeCtx::new(inputs, order.clone(), fixed, semirings.clone(), bags, node.emit, node_init, union, group, db.set_config().clone());
        let (out, js) = run_node(&ctx, threads, group_strategy);
        stats.intersections += js.intersections;
        stats.intermediate_tuples += js.intermediate_tuples;
        stats.emitted_rows += js.emitted_rows;
        match out {
            NodeOutput::Rows(rows) => results[t] = Some(rows),
            NodeOutput::Groups(groups) => {
                let codes = ctx
                    .group
                    .iter()
                    .map(|g| match g {
                        GroupPart::Key(_) => None,
                        GroupPart::Code(c) => Some(c.values.clone()),
                    })
                    .collect();
                let (keys, vals) = groups.into_iter().map(|(k, v)| (k.to_vec(), v.to_vec())).unzip();
                return Ok((finish(plan, db, RootRows::Groups { keys, vals, codes })?, stats));
            }
        }
    }
    let root = results[0].take().expect("root executed");
    let table = finish(plan, db, RootRows::Keys(root))?;
    Ok((table, stats))
}

/// Per-depth key selections of the node's edges, as dictionary ids.
fn fixed_bindings(plan: &Plan, db: &Database, order: &[usize], node_edges: &[usize]) -> Vec<Option<Option<Id>>> {
    let hg = &plan.hg;
    order
        .iter()
        .map(|&v| {
            let mut fixed: Option<Option<Id>> = None;
            for s in hg.selections_on(v).filter(|s| node_edges.contains(&s.edge)) {
                let id = db.dictionary(&hg.vertices[v].domain).and_then(|d| d.encode(&s.value));
                fixed = Some(match (fixed, id) {
                    (None, id) => id,
                    (Some(Some(a)), Some(b)) if a == b => Some(a),
                    _ => None,
                });
            }
            fixed
        })
        .collect()
}

fn group_parts(plan: &Plan, db: &Database, order: &[usize]) -> Result<Vec<GroupPart>> {
    let hg = &plan.hg;
    let depth =
        |v: usize| order.iter().position(|&x| x == v).ok_or_else(|| Error::Internal(format!("group vertex {} unbound at the root", hg.vertices[v].name)));
    hg.group
        .iter()
        .map(|g| match g {
            GroupColumn::Key(v) => Ok(GroupPart::Key(depth(*v)?)),
            GroupColumn::Annotation { edge, column, determinants } => {
                let e = &hg.edges[*edge];
                let rel = db.relation(&e.relation).expect("planned relation exists");
                let cols: Vec<&[Id]> =
                    determinants.iter().map(|d| rel.key_ids(e.columns[e.vertices.iter().position(|x| x == d).expect("determinant on edge")])).collect();
                let reader = rel.annotation(*column);
                let values: Vec<Value> = (0..rel.num_rows()).map(|r| reader.get(r)).collect();
                let depths = determinants.iter().map(|&d| depth(d)).collect::<Result<Vec<_>>>()?;
                Ok(GroupPart::Code(AnnotationCodes::build(&cols, values, depths)))
            }
        })
        .collect()
}

fn execute_dense(plan: &Plan, db: &Database, p: &DensePattern, opts: &ExecOptions, threads: usize) -> Result<NodeRows> {
    let hg = &plan.hg;
    let view_of = |e: usize, first: usize| -> Result<(Vec<f64>, usize, usize, (Id, Id), (Id, Id))> {
        let edge = &hg.edges[e];
        let rel = db.relation(&edge.relation).expect("planned relation exists");
        let Some(crate::ir::Expr::Col(c)) = &hg.passes[0].edge_exprs[e] else {
            return Err(Error::Internal("dense pattern without a value column".into()));
        };
        let v = rel.dense_view(&rel.schema().columns[c.col].name).ok_or_else(|| Error::Internal("dense view unavailable".into()))?;
        let first_col = edge.columns[edge.vertices.iter().position(|&x| x == first).unwrap()];
        if rel.key_level(first_col) == Some(0) {
            Ok((v.values.clone(), v.rows, v.cols, v.row_universe, v.col_universe))
        } else {
            let mut t = vec![0.0; v.values.len()];
            for r in 0..v.rows {
                for c in 0..v.cols {
                    t[c * v.rows + r] = v.values[r * v.cols + c];
                }
            }
            Ok((t, v.cols, v.rows, v.col_universe, v.row_universe))
        }
    };
    let (a, n, ka, iu, aku) = view_of(p.a, p.i)?;
    let (b, kb, m, bku, ju) = view_of(p.b, p.k)?;
    if aku != bku || ka != kb {
        return Err(Error::DimensionMismatch(format!("inner dimension spans ids {}..{} and {}..{}", aku.0, aku.1, bku.0, bku.1)));
    }
    let mut rows = NodeRows { passes: 1, ..Default::default() };
    match p.kind {
        DenseKind::MatMat => {
            let j = p.j.expect("matrix product has a j vertex");
            let mut out = vec![0.0; n * m];
            opts.kernel.matmul(&a, &b, n, ka, m, &mut out, threads);
            let (vi, vj) = (p.i.min(j), p.i.max(j));
            rows.vertices = vec![vi, vj];
            rows.keys.reserve(2 * n * m);
            for r in 0..n {
                for c in 0..m {
                    let (ii, jj) = (iu.0 + r as Id, ju.0 + c as Id);
                    if vi == p.i {
                        rows.keys.extend([ii, jj]);
                    } else {
                        rows.keys.extend([jj, ii]);
                    }
                }
            }
            if vi != p.i {
                let mut idx: Vec<usize> = (0..n * m).collect();
                idx.sort_by_key(|&x| (rows.keys[2 * x], rows.keys[2 * x + 1]));
                rows.keys = idx.iter().flat_map(|&x| [rows.keys[2 * x], rows.keys[2 * x + 1]]).collect();
                rows.vals = idx.iter().map(|&x| out[x]).collect();
            } else {
                rows.vals = out;
            }
        }
        DenseKind::MatVec => {
            let mut out = vec![0.0; n];
            opts.kernel.matvec(&a, &b, n, ka, &mut out, threads);
            rows.vertices = vec![p.i];
            rows.keys = (0..n).map(|r| iu.0 + r as Id).collect();
            rows.vals = out;
        }
    }
    Ok(rows)
}

/// Decodes root rows into output columns, ordered by the GROUP BY key.
fn finish(plan: &Plan, db: &Database, rows: RootRows) -> Result<ResultTable> {
    let hg = &plan.hg;
    let ir = &plan.ir;
    let mut table = ResultTable::new(ir.output_names.clone());
    let dicts: Vec<Option<&Dictionary>> = hg
        .group
        .iter()
        .map(|g| match g {
            GroupColumn::Key(v) => Some(db.dictionary(&hg.vertices[*v].domain).expect("vertex domain").as_ref()),
            GroupColumn::Annotation { .. } => None,
        })
        .collect();
    let passes: Vec<usize> =
        ir.aggregates.iter().enumerate().map(|(a, _)| hg.passes.iter().position(|p| p.aggregate == a).expect("aggregate has a pass")).collect();
    let agg_value = |a: usize, x: f64| -> Value {
        if ir.aggregates[a].integral && x.is_finite() {
            Value::Int(x.round() as i64)
        } else {
            Value::Float(x)
        }
    };
    // Flattened group ids and per-pass values, one entry per output row.
    let ng = hg.group.len();
    let (gkeys, vals, np, codes): (Vec<u32>, Vec<f64>, usize, Vec<Option<Vec<Value>>>) = match rows {
        RootRows::Keys(r) => {
            let cols: Vec<usize> = hg
                .group
                .iter()
                .map(|g| match g {
                    GroupColumn::Key(v) => r.vertices.iter().position(|x| x == v).expect("group vertex in root rows"),
                    GroupColumn::Annotation { .. } => unreachable!("annotation groups use hash grouping"),
                })
                .collect();
            let width = r.vertices.len();
            let identity = cols.iter().enumerate().all(|(i, &c)| i == c) && width == ng;
            let gkeys = if identity {
                r.keys
            } else {
                (0..r.len()).flat_map(|row| cols.iter().map(move |&c| (row, c))).map(|(row, c)| r.keys[row * width + c]).collect()
            };
            (gkeys, r.vals, r.passes, vec![None; ng])
        }
        RootRows::Groups { keys, vals, codes } => {
            let np = vals.first().map_or(1, |v| v.len());
            (keys.into_iter().flatten().collect(), vals.into_iter().flatten().collect(), np, codes)
        }
    };
    let n = if np == 0 { 0 } else { vals.len() / np };
    let key = |r: usize| &gkeys[r * ng..(r + 1) * ng];
    let mut idx: Vec<usize> = (0..n).collect();
    if !(1..n).all(|r| key(r - 1) <= key(r)) {
        idx.sort_by(|&a, &b| key(a).cmp(key(b)));
    }
    table.rows = idx
        .into_iter()
        .map(|r| {
            ir.outputs
                .iter()
                .map(|o| match *o {
                    OutputColumn::Group(g) => match (dicts[g], &codes[g]) {
                        (Some(d), _) => d.decode(key(r)[g]),
                        (None, Some(values)) => values[key(r)[g] as usize].clone(),
                        (None, None) => unreachable!("annotation group without codes"),
                    },
                    OutputColumn::Aggregate(a) => agg_value(a, vals[r * np + passes[a]]),
                })
                .collect()
        })
        .collect();
    Ok(table)
}
